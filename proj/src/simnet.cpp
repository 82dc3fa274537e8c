#include "splitloc/simnet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "splitloc/features.hpp"
#include "splitloc/io_error.hpp"

namespace splitloc {

const char* msg_kind_name(MsgKind k) {
    switch (k) {
    case MsgKind::Request: return "request";
    case MsgKind::EmbeddingReply: return "embedding_reply";
    }
    return "?";
}

namespace {

std::vector<uint8_t> request_payload(int64_t t) {
    std::vector<uint8_t> p(kRequestBytes);
    std::memcpy(p.data(), "SLRQ", 4);
    const auto tt = static_cast<uint32_t>(t);
    std::memcpy(p.data() + 4, &tt, 4);
    return p;
}

std::vector<uint8_t> reply_payload(const Embedding& e) {
    std::vector<uint8_t> p(kEmbeddingReplyBytes);
    const auto idx = static_cast<uint16_t>(e.ap_index);
    std::memcpy(p.data(), &idx, 2);
    const auto bytes = e.to_bytes();
    std::memcpy(p.data() + 2, bytes.data(), bytes.size());
    return p;
}

} // namespace

RoundResult run_inference_round(const Environment& env, const RadioConfig& radio,
                                const ImageGrid& grid, std::span<ApNode> aps, UserNode& user,
                                Vec2 device_xy, const DropConfig& drop, Substream round_rng,
                                MessageLog& log, int64_t& logical_time) {
    if (!(drop.p >= 0.0 && drop.p <= 1.0))
        throw std::invalid_argument("drop probability must be in [0,1]");
    if (!user.decoder)
        throw std::invalid_argument("user node has no decoder");
    if (aps.size() < 2)
        throw std::invalid_argument("need at least 2 access points");
    if (user.ap_poses.size() != aps.size())
        throw std::invalid_argument("user pose table does not match access point count");

    // Request broadcast. The payload is an opaque fixed-size header; the
    // user's position appears nowhere on the wire.
    for (const auto& ap : aps) {
        Message m;
        m.logical_time = logical_time++;
        m.src = kUserNodeId;
        m.dst = ap.ap_index;
        m.kind = MsgKind::Request;
        m.payload = request_payload(m.logical_time);
        m.tags = {"request"};
        log.messages.push_back(std::move(m));
    }

    // Each access point measures its own channel and answers with the
    // embedding alone. Dropped replies vanish in transit and are not logged.
    std::vector<Embedding> delivered;
    for (size_t i = 0; i < aps.size(); ++i) {
        ApNode& ap = aps[i];
        Substream ap_rng = round_rng.fork(static_cast<uint64_t>(i));
        const bool dropped = drop.p > 0.0 && ap_rng.fork(1).uniform() < drop.p;
        if (dropped)
            continue;
        const auto csi = synth_csi(env, device_xy, ap.ap_index, radio, ap_rng.fork(0));
        const auto img = aoa_tof_image(csi, radio, grid);
        std::vector<float> px(img.pixels.size());
        for (size_t j = 0; j < px.size(); ++j)
            px[j] = static_cast<float>(img.pixels[j]);
        const Embedding emb = encoder_eval(*ap.encoder, px, ap.ap_index);

        Message m;
        m.logical_time = logical_time++;
        m.src = ap.ap_index;
        m.dst = kUserNodeId;
        m.kind = MsgKind::EmbeddingReply;
        m.payload = reply_payload(emb);
        m.tags = {"embedding"};
        log.messages.push_back(std::move(m));
        delivered.push_back(emb);
    }

    if (delivered.size() < 2)
        throw InsufficientBearings(static_cast<int>(delivered.size()));

    // User side: parse the replies, zero-fill the silent access points,
    // decode, then triangulate over the bearings that actually arrived.
    std::vector<Embedding> slots(aps.size());
    std::vector<bool> have(aps.size(), false);
    for (const auto& e : delivered) {
        slots[static_cast<size_t>(e.ap_index)] = e;
        slots[static_cast<size_t>(e.ap_index)].ap_index = e.ap_index;
        have[static_cast<size_t>(e.ap_index)] = true;
    }
    for (size_t i = 0; i < slots.size(); ++i)
        slots[i].ap_index = static_cast<int>(i);

    RoundResult out;
    out.bearings_local = decoder_eval(*user.decoder, slots);
    for (size_t i = 0; i < have.size(); ++i)
        if (have[i])
            out.delivered_aps.push_back(static_cast<int>(i));

    std::vector<double> angles;
    std::vector<ApPose> poses;
    for (int i : out.delivered_aps) {
        angles.push_back(out.bearings_local[static_cast<size_t>(i)] +
                         user.ap_poses[static_cast<size_t>(i)].orientation_phi);
        poses.push_back(user.ap_poses[static_cast<size_t>(i)]);
    }
    Triangulation tri;
    if (try_triangulate(angles, poses, tri)) {
        out.have_fix = true;
        out.estimate = tri.point;
    }
    return out;
}

AuditReport audit_privacy(const MessageLog& log) {
    AuditReport r;
    r.n_messages = log.messages.size();
    for (size_t i = 0; i < log.messages.size(); ++i) {
        const Message& m = log.messages[i];
        const bool from_user = m.src == kUserNodeId;
        const bool to_user = m.dst == kUserNodeId;

        if (from_user) {
            if (m.kind != MsgKind::Request)
                r.violations.push_back({i, 'a', "user sent a non-request message"});
            else if (m.payload.size() != kRequestBytes)
                r.violations.push_back({i, 'a',
                                        "user request has " + std::to_string(m.payload.size()) +
                                            " bytes, expected " + std::to_string(kRequestBytes)});
            for (const auto& t : m.tags)
                if (t == "location" || t == "csi" || t == "image")
                    r.violations.push_back({i, 'a', "user payload tagged '" + t + "'"});
        } else {
            if (to_user) {
                r.max_ap_to_user_payload = std::max(r.max_ap_to_user_payload, m.payload.size());
                if (m.kind != MsgKind::EmbeddingReply)
                    r.violations.push_back({i, 'b', "access point sent a non-embedding message"});
                else if (m.payload.size() > kEmbeddingReplyBytes)
                    r.violations.push_back(
                        {i, 'b',
                         "embedding reply has " + std::to_string(m.payload.size()) +
                             " bytes, bound is " + std::to_string(kEmbeddingReplyBytes)});
            } else {
                r.violations.push_back({i, 'c',
                                        "access point " + std::to_string(m.src) +
                                            " messaged access point " + std::to_string(m.dst)});
            }
            for (const auto& t : m.tags) {
                if (t == "csi" || t == "image")
                    r.violations.push_back(
                        {i, 'd', "raw measurement tagged '" + t + "' left access point " +
                                     std::to_string(m.src)});
                else if (to_user && (t == "location" || t == "aoa"))
                    r.violations.push_back(
                        {i, 'd', "derived estimate tagged '" + t + "' sent to the user by access point " +
                                     std::to_string(m.src)});
            }
        }
    }
    return r;
}

void export_message_log(const MessageLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    os << "logical_time,src,dst,kind,payload_bytes,tags\n";
    for (const auto& m : log.messages) {
        os << m.logical_time << "," << m.src << "," << m.dst << "," << msg_kind_name(m.kind)
           << "," << m.payload.size() << ",";
        for (size_t i = 0; i < m.tags.size(); ++i)
            os << (i ? ";" : "") << m.tags[i];
        os << "\n";
    }
}

void write_audit_report(const AuditReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    os << "messages: " << report.n_messages << "\n";
    os << "max_ap_to_user_payload_bytes: " << report.max_ap_to_user_payload << "\n";
    os << "violations: " << report.violations.size() << "\n";
    for (const auto& v : report.violations)
        os << "  message " << v.message_index << " rule (" << v.rule << "): " << v.detail
           << "\n";
    os << (report.clean() ? "PASS\n" : "FAIL\n");
}

} // namespace splitloc
