#include "splitloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "splitloc/io_error.hpp"

namespace splitloc {

namespace {

Tensor kaiming(std::vector<int> shape, int fan_in, Substream& s) {
    Tensor t(std::move(shape), true);
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (auto& v : t.data)
        v = std_dev * s.normal();
    return t;
}

Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), true); }

} // namespace

std::array<uint8_t, Embedding::kWireBytes> Embedding::to_bytes() const {
    std::array<uint8_t, kWireBytes> out;
    std::memcpy(out.data(), values.data(), kWireBytes);
    return out;
}

Embedding Embedding::from_bytes(int ap_index, std::span<const uint8_t> bytes) {
    if (bytes.size() != kWireBytes)
        throw std::invalid_argument("embedding payload must be " + std::to_string(kWireBytes) +
                                    " bytes, got " + std::to_string(bytes.size()));
    Embedding e;
    e.ap_index = ap_index;
    std::memcpy(e.values.data(), bytes.data(), kWireBytes);
    return e;
}

EncoderModel make_encoder(const ImageGrid& grid, Substream init) {
    grid.validate();
    if (grid.n_angle_bins % 8 != 0 || grid.n_tof_bins % 8 != 0)
        throw std::invalid_argument("encoder needs image sides divisible by 8, got " +
                                    std::to_string(grid.n_angle_bins) + "x" +
                                    std::to_string(grid.n_tof_bins));
    EncoderModel m;
    m.grid = grid;
    const int flat = 32 * (grid.n_angle_bins / 8) * (grid.n_tof_bins / 8);
    m.params.add("conv1.w", ParamKind::Conv, kaiming({8, 1, 3, 3}, 1 * 9, init));
    m.params.add("conv1.b", ParamKind::Bias, zeros({8}));
    m.params.add("conv2.w", ParamKind::Conv, kaiming({16, 8, 3, 3}, 8 * 9, init));
    m.params.add("conv2.b", ParamKind::Bias, zeros({16}));
    m.params.add("conv3.w", ParamKind::Conv, kaiming({32, 16, 3, 3}, 16 * 9, init));
    m.params.add("conv3.b", ParamKind::Bias, zeros({32}));
    m.params.add("fc1.w", ParamKind::Linear, kaiming({128, flat}, flat, init));
    m.params.add("fc1.b", ParamKind::Bias, zeros({128}));
    m.params.add("fc2.w", ParamKind::Linear, kaiming({96, 128}, 128, init));
    m.params.add("fc2.b", ParamKind::Bias, zeros({96}));
    m.params.add("fc3.w", ParamKind::Linear, kaiming({kEmbeddingDim, 96}, 96, init));
    m.params.add("fc3.b", ParamKind::Bias, zeros({kEmbeddingDim}));
    return m;
}

DecoderModel make_decoder(int n_ap, Substream init) {
    if (n_ap < 2)
        throw std::invalid_argument("decoder needs at least 2 access points");
    DecoderModel m;
    m.n_ap = n_ap;
    const int in = n_ap * kEmbeddingDim;
    m.params.add("fc1.w", ParamKind::Linear, kaiming({256, in}, in, init));
    m.params.add("fc1.b", ParamKind::Bias, zeros({256}));
    m.params.add("fc2.w", ParamKind::Linear, kaiming({n_ap, 256}, 256, init));
    m.params.add("fc2.b", ParamKind::Bias, zeros({n_ap}));
    return m;
}

std::pair<std::vector<EncoderModel>, DecoderModel> init_models(const ImageGrid& grid, int n_ap,
                                                               const RngService& rng) {
    std::vector<EncoderModel> encs;
    encs.reserve(static_cast<size_t>(n_ap));
    for (int i = 0; i < n_ap; ++i)
        encs.push_back(make_encoder(grid, rng.stream("init/encoder" + std::to_string(i))));
    return {std::move(encs), make_decoder(n_ap, rng.stream("init/decoder"))};
}

NodeId encoder_forward(Graph& g, EncoderModel& enc, NodeId image_input, Substream drop) {
    auto p = [&](const char* name) { return g.param(enc.params.at(name)); };
    NodeId x = g.conv2d(image_input, p("conv1.w"), p("conv1.b"), 2, 1);
    x = g.relu(x);
    x = g.conv2d(x, p("conv2.w"), p("conv2.b"), 2, 1);
    x = g.relu(x);
    x = g.conv2d(x, p("conv3.w"), p("conv3.b"), 2, 1);
    x = g.relu(x);
    x = g.flatten(x);
    x = g.relu(g.linear(x, p("fc1.w"), p("fc1.b")));
    x = g.dropout(x, enc.dropout_p, drop.fork(1));
    x = g.relu(g.linear(x, p("fc2.w"), p("fc2.b")));
    x = g.dropout(x, enc.dropout_p, drop.fork(2));
    return g.linear(x, p("fc3.w"), p("fc3.b"));
}

NodeId decoder_forward(Graph& g, DecoderModel& dec, std::span<const NodeId> embeddings,
                       Substream drop) {
    if (static_cast<int>(embeddings.size()) != dec.n_ap)
        throw std::invalid_argument("decoder expects " + std::to_string(dec.n_ap) +
                                    " embeddings, got " + std::to_string(embeddings.size()));
    auto p = [&](const char* name) { return g.param(dec.params.at(name)); };
    NodeId x = g.concat_cols(embeddings);
    x = g.relu(g.linear(x, p("fc1.w"), p("fc1.b")));
    x = g.dropout(x, dec.dropout_p, drop.fork(1));
    x = g.linear(x, p("fc2.w"), p("fc2.b"));
    x = g.tanh_act(x);
    return g.scale(x, std::numbers::pi / 2);
}

Embedding encoder_eval(EncoderModel& enc, std::span<const float> image_pixels, int ap_index) {
    const size_t px =
        static_cast<size_t>(enc.grid.n_angle_bins) * static_cast<size_t>(enc.grid.n_tof_bins);
    if (image_pixels.size() != px)
        throw std::invalid_argument("image has " + std::to_string(image_pixels.size()) +
                                    " pixels, encoder expects " + std::to_string(px));
    Graph g;
    g.set_train_mode(false);
    const NodeId in = g.input({1, 1, enc.grid.n_angle_bins, enc.grid.n_tof_bins});
    auto dst = g.input_data(in);
    for (size_t i = 0; i < px; ++i)
        dst[i] = static_cast<double>(image_pixels[i]);
    const NodeId out = encoder_forward(g, enc, in, Substream(0));
    g.forward();
    Embedding e;
    e.ap_index = ap_index;
    const auto v = g.value(out);
    for (int i = 0; i < kEmbeddingDim; ++i)
        e.values[static_cast<size_t>(i)] = static_cast<float>(v[static_cast<size_t>(i)]);
    return e;
}

std::vector<double> decoder_eval(DecoderModel& dec, std::span<const Embedding> embeddings) {
    if (static_cast<int>(embeddings.size()) != dec.n_ap)
        throw std::invalid_argument("decoder expects " + std::to_string(dec.n_ap) +
                                    " embeddings, got " + std::to_string(embeddings.size()));
    std::vector<const Embedding*> ordered(static_cast<size_t>(dec.n_ap), nullptr);
    for (const auto& e : embeddings) {
        if (e.ap_index < 0 || e.ap_index >= dec.n_ap)
            throw std::invalid_argument("embedding for unknown access point " +
                                        std::to_string(e.ap_index));
        if (ordered[static_cast<size_t>(e.ap_index)])
            throw std::invalid_argument("duplicate embedding for access point " +
                                        std::to_string(e.ap_index));
        ordered[static_cast<size_t>(e.ap_index)] = &e;
    }
    Graph g;
    g.set_train_mode(false);
    std::vector<NodeId> ins;
    ins.reserve(ordered.size());
    for (const auto* e : ordered) {
        const NodeId in = g.input({1, kEmbeddingDim});
        auto dst = g.input_data(in);
        for (int i = 0; i < kEmbeddingDim; ++i)
            dst[static_cast<size_t>(i)] = static_cast<double>(e->values[static_cast<size_t>(i)]);
        ins.push_back(in);
    }
    const NodeId out = decoder_forward(g, dec, ins, Substream(0));
    g.forward();
    const auto v = g.value(out);
    return std::vector<double>(v.begin(), v.end());
}

namespace {

nlohmann::json grid_to_json(const ImageGrid& g) {
    return nlohmann::json{{"n_angle_bins", g.n_angle_bins}, {"n_tof_bins", g.n_tof_bins},
                          {"angle_min", g.angle_min},       {"angle_max", g.angle_max},
                          {"tof_min", g.tof_min},           {"tof_max", g.tof_max}};
}

ImageGrid grid_from_json(const nlohmann::json& j) {
    ImageGrid g;
    g.n_angle_bins = j.at("n_angle_bins").get<int>();
    g.n_tof_bins = j.at("n_tof_bins").get<int>();
    g.angle_min = j.at("angle_min").get<double>();
    g.angle_max = j.at("angle_max").get<double>();
    g.tof_min = j.at("tof_min").get<double>();
    g.tof_max = j.at("tof_max").get<double>();
    return g;
}

} // namespace

void save_models(const std::string& dir, const ModelBundle& bundle) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "splitloc-checkpoint";
    manifest["version"] = 1;
    manifest["n_ap"] = bundle.encoders.size();
    manifest["radio_preset_id"] = bundle.radio_preset_id;
    manifest["grid"] = grid_to_json(bundle.grid);
    manifest["decoder"] = "decoder.fwps";
    auto poses = nlohmann::json::array();
    for (const auto& p : bundle.ap_poses)
        poses.push_back({p.x, p.y, p.orientation_phi});
    manifest["ap_poses"] = poses;
    auto encs = nlohmann::json::array();
    for (size_t i = 0; i < bundle.encoders.size(); ++i) {
        const std::string file = "encoder_" + std::to_string(i) + ".fwps";
        bundle.encoders[i].params.save((fs::path(dir) / file).string());
        encs.push_back({{"ap_index", i}, {"file", file}});
    }
    manifest["encoders"] = encs;
    bundle.decoder.params.save((fs::path(dir) / "decoder.fwps").string());
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os)
        throw IoError("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

ModelBundle load_models(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is)
        throw IoError("cannot open manifest in " + dir);
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("format", "") != "splitloc-checkpoint")
        throw BadMagicError("not a model checkpoint directory: " + dir);
    ModelBundle b;
    b.grid = grid_from_json(manifest.at("grid"));
    b.radio_preset_id = manifest.at("radio_preset_id").get<uint32_t>();
    for (const auto& p : manifest.at("ap_poses"))
        b.ap_poses.push_back(ApPose{p.at(0).get<double>(), p.at(1).get<double>(),
                                    p.at(2).get<double>()});
    const size_t n_ap = manifest.at("n_ap").get<size_t>();
    if (b.ap_poses.size() != n_ap)
        throw DimensionError("manifest pose count does not match n_ap");
    b.encoders.resize(n_ap);
    for (const auto& e : manifest.at("encoders")) {
        const size_t idx = e.at("ap_index").get<size_t>();
        if (idx >= n_ap)
            throw DimensionError("manifest encoder index out of range");
        b.encoders[idx].grid = b.grid;
        b.encoders[idx].params = ParamSet::load((fs::path(dir) / e.at("file").get<std::string>()).string());
    }
    b.decoder.n_ap = static_cast<int>(n_ap);
    b.decoder.params =
        ParamSet::load((fs::path(dir) / manifest.at("decoder").get<std::string>()).string());
    return b;
}

} // namespace splitloc
