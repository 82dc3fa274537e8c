#pragma once
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splitloc/features.hpp"
#include "splitloc/graph.hpp"
#include "splitloc/rng.hpp"
#include "splitloc/tensor.hpp"

namespace splitloc {

inline constexpr int kEmbeddingDim = 64;

// Per access point image encoder: three stride-2 3x3 convs (1->8->16->32)
// and a linear head down to the embedding. Image side lengths must be
// divisible by 8.
struct EncoderModel {
    ImageGrid grid;
    ParamSet params;
    double dropout_p = 0.2;
};

// User-side decoder: takes the concatenated embeddings of all access
// points, returns one local bearing per access point in [-pi/2, pi/2].
struct DecoderModel {
    int n_ap = 0;
    ParamSet params;
    double dropout_p = 0.2;
};

// What crosses the wire from an access point: the embedding alone.
struct Embedding {
    int ap_index = 0;
    std::array<float, kEmbeddingDim> values{};

    static constexpr size_t kWireBytes = kEmbeddingDim * sizeof(float); // 256

    std::array<uint8_t, kWireBytes> to_bytes() const;
    static Embedding from_bytes(int ap_index, std::span<const uint8_t> bytes);
};

EncoderModel make_encoder(const ImageGrid& grid, Substream init);
DecoderModel make_decoder(int n_ap, Substream init);
std::pair<std::vector<EncoderModel>, DecoderModel>
init_models(const ImageGrid& grid, int n_ap, const RngService& rng);

// Graph builders; both return the output node. Gradients flow into the
// model's ParamSet tensors after Graph::backward.
NodeId encoder_forward(Graph& g, EncoderModel& enc, NodeId image_input, Substream drop);
NodeId decoder_forward(Graph& g, DecoderModel& dec, std::span<const NodeId> embeddings,
                       Substream drop);

// Single-sample eval-mode passes (dropout off) for deployment paths.
Embedding encoder_eval(EncoderModel& enc, std::span<const float> image_pixels, int ap_index);
// Expects exactly n_ap embeddings covering ap_index 0..n_ap-1 (any order,
// duplicates rejected). Returns local bearings, radians.
std::vector<double> decoder_eval(DecoderModel& dec, std::span<const Embedding> embeddings);

// Checkpoint directory: manifest.json plus one weight container per model.
struct ModelBundle {
    std::vector<EncoderModel> encoders;
    DecoderModel decoder;
    std::vector<ApPose> ap_poses;
    ImageGrid grid;
    uint32_t radio_preset_id = 0;
};

void save_models(const std::string& dir, const ModelBundle& bundle);
ModelBundle load_models(const std::string& dir);

} // namespace splitloc
