#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitloc/channel.hpp"
#include "splitloc/model.hpp"

namespace splitloc {

// Node ids on the simulated network: access points are their index,
// the user device is -1.
inline constexpr int kUserNodeId = -1;

enum class MsgKind : uint8_t { Request, EmbeddingReply };
const char* msg_kind_name(MsgKind k);

struct Message {
    int64_t logical_time = 0;
    int src = 0;
    int dst = 0;
    MsgKind kind = MsgKind::Request;
    std::vector<uint8_t> payload;
    std::vector<std::string> tags; // content labels, e.g. "request", "embedding"
};

struct MessageLog {
    std::vector<Message> messages;
};

inline constexpr size_t kRequestBytes = 8;
// u16 access point index + the raw embedding floats.
inline constexpr size_t kEmbeddingReplyBytes = 2 + Embedding::kWireBytes;

struct InsufficientBearings : std::runtime_error {
    int delivered = 0;
    explicit InsufficientBearings(int got)
        : std::runtime_error("only " + std::to_string(got) +
                             " embedding replies delivered, need at least 2"),
          delivered(got) {}
};

struct ApNode {
    int ap_index = 0;
    EncoderModel* encoder = nullptr;
};

// The user side knows the access point poses and holds the decoder; it
// never sees the environment or any CSI.
struct UserNode {
    DecoderModel* decoder = nullptr;
    std::vector<ApPose> ap_poses;
};

struct DropConfig {
    double p = 0.0; // iid per reply
};

struct RoundResult {
    std::vector<double> bearings_local; // per access point, decoder output
    std::vector<int> delivered_aps;
    bool have_fix = false;
    Vec2 estimate;
};

// One request/reply cycle: the user broadcasts a fixed-size request, each
// access point measures the channel to device_xy, encodes it and replies
// with its embedding (unless dropped). The user zero-fills missing
// embeddings for the decoder and triangulates over the delivered bearings.
// Throws InsufficientBearings when fewer than 2 replies arrive. Every
// message is appended to log; logical_time counts on across rounds.
RoundResult run_inference_round(const Environment& env, const RadioConfig& radio,
                                const ImageGrid& grid, std::span<ApNode> aps, UserNode& user,
                                Vec2 device_xy, const DropConfig& drop, Substream round_rng,
                                MessageLog& log, int64_t& logical_time);

struct AuditViolation {
    size_t message_index = 0;
    char rule = '?';
    std::string detail;
};

struct AuditReport {
    size_t n_messages = 0;
    size_t max_ap_to_user_payload = 0;
    std::vector<AuditViolation> violations;
    bool clean() const { return violations.empty(); }
};

// Checks the deployment privacy contract over a recorded log:
//  (a) the user transmits nothing but fixed-size requests,
//  (b) access points send the user only bounded embedding replies,
//  (c) access points never talk to each other,
//  (d) nothing tagged as a raw measurement ("csi", "image") leaves a node, and
//      nothing tagged as a derived estimate ("location", "aoa") reaches the user.
AuditReport audit_privacy(const MessageLog& log);

void export_message_log(const MessageLog& log, const std::string& path);
void write_audit_report(const AuditReport& report, const std::string& path);

} // namespace splitloc
