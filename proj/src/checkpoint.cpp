#include "fedtiny/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fedtiny/error.hpp"

namespace fedtiny {

using nlohmann::json;

namespace {

json layer_to_json(const Layer& layer) {
  if (auto* lin = std::get_if<LinearLayer>(&layer)) {
    return {{"type", "linear"},
            {"in", lin->in_features()},
            {"out", lin->out_features()},
            {"prunable", lin->prunable},
            {"weight", lin->weight.storage()},
            {"bias", lin->bias.storage()}};
  }
  if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
    const auto& s = bn->state;
    return {{"type", "batch_norm"}, {"features", s.features()}, {"momentum", s.momentum},
            {"eps", s.eps},         {"mean", s.mean},           {"var", s.var},
            {"scale", s.scale},     {"shift", s.shift}};
  }
  return {{"type", "relu"}, {"width", std::get<ReluLayer>(layer).width}};
}

Layer layer_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "linear") {
    const auto in = j.at("in").get<std::size_t>(), out = j.at("out").get<std::size_t>();
    LinearLayer lin;
    lin.weight = Tensor({out, in}, j.at("weight").get<std::vector<double>>());
    lin.bias = Tensor({out}, j.at("bias").get<std::vector<double>>());
    lin.prunable = j.at("prunable").get<bool>();
    return lin;
  }
  if (type == "batch_norm") {
    BNState s;
    s.momentum = j.at("momentum").get<double>();
    s.eps = j.at("eps").get<double>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.var = j.at("var").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    s.shift = j.at("shift").get<std::vector<double>>();
    require(s.features() == j.at("features").get<std::size_t>(), ErrorCode::kParse,
            "batch-norm feature count does not match its statistics");
    s.validate();
    return BatchNormLayer{std::move(s)};
  }
  if (type == "relu") return ReluLayer{j.at("width").get<std::size_t>()};
  fail(ErrorCode::kParse, "unknown layer type '" + type + "'");
}

std::string bits_to_string(const std::vector<std::uint8_t>& bits) {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) s[i] = '1';
  return s;
}

std::vector<std::uint8_t> bits_from_string(const std::string& s) {
  std::vector<std::uint8_t> bits(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(s[i] == '0' || s[i] == '1', ErrorCode::kParse, "mask bits must be 0 or 1");
    bits[i] = s[i] == '1';
  }
  return bits;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
  json layers = json::array();
  for (const auto& l : ck.model.layers()) layers.push_back(layer_to_json(l));
  json masks = json::array();
  for (const auto& lm : ck.mask.layers())
    masks.push_back(
        {{"layer", lm.layer}, {"rows", lm.rows}, {"cols", lm.cols}, {"bits", bits_to_string(lm.bits)}});
  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"algorithm", to_string(ck.algorithm)},
            {"batch_size", ck.batch_size},
            {"local_epochs", ck.local_epochs},
            {"round", ck.round},
            {"topk_total", ck.topk_total},
            {"blocks", ck.model.blocks()},
            {"layers", std::move(layers)},
            {"mask", std::move(masks)}};
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    require(j.at("format").get<std::string>() == kCheckpointFormat, ErrorCode::kParse,
            "not a fedtiny checkpoint");
    const int version = j.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorCode::kParse,
            "unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.algorithm = parse_cost_algorithm(j.at("algorithm").get<std::string>());
    ck.batch_size = j.at("batch_size").get<std::size_t>();
    ck.local_epochs = j.at("local_epochs").get<std::size_t>();
    ck.round = j.at("round").get<std::size_t>();
    ck.topk_total = j.value("topk_total", std::size_t{0});
    require(ck.batch_size >= 1 && ck.local_epochs >= 1, ErrorCode::kParse,
            "batch_size and local_epochs must be positive");

    std::vector<Layer> layers;
    for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
    auto blocks = j.at("blocks").get<std::vector<std::vector<std::size_t>>>();
    std::vector<bool> prunable;
    for (const auto& l : layers)
      if (auto* lin = std::get_if<LinearLayer>(&l)) prunable.push_back(lin->prunable);
    ck.model = Network(std::move(layers), std::max<std::size_t>(1, blocks.size()));
    ck.model.set_blocks(std::move(blocks));
    std::size_t li = 0;
    for (auto i : ck.model.linear_layers()) ck.model.linear(i).prunable = prunable[li++];
    // Boundary layers are never prunable whatever the file says.
    const auto lin = ck.model.linear_layers();
    ck.model.linear(lin.front()).prunable = false;
    ck.model.linear(lin.back()).prunable = false;

    std::vector<LayerMask> masks;
    for (const auto& m : j.at("mask")) {
      LayerMask lm;
      lm.layer = m.at("layer").get<std::size_t>();
      lm.rows = m.at("rows").get<std::size_t>();
      lm.cols = m.at("cols").get<std::size_t>();
      lm.bits = bits_from_string(m.at("bits").get<std::string>());
      masks.push_back(std::move(lm));
    }
    ck.mask = Mask(std::move(masks));
    if (!ck.mask.empty()) ck.mask.check_compatible(ck.model);
    return ck;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("corrupt checkpoint: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << checkpoint_to_json(ck);
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

std::string cost_report_json(const Checkpoint& ck, std::uint64_t bit_width) {
  require(bit_width >= 1, ErrorCode::kInvalidArgument, "bit width must be at least 1");
  const auto& net = ck.model;
  const Mask dense;
  const auto storage = model_storage(net, ck.mask, bit_width);
  const auto n_eligible = net.eligible_parameter_count();
  const auto m_eligible = ck.mask.empty() ? n_eligible : ck.mask.nnz();
  const auto scheme = n_eligible > 0 ? choose_scheme(m_eligible, n_eligible) : Scheme::kDense;

  // X: the costliest single block, since the checkpoint does not say which
  // block a future round would target.
  double extra = 0.0;
  if (ck.algorithm == CostAlgorithm::kFedTiny) {
    for (const auto& block : net.blocks()) {
      std::vector<std::size_t> targets;
      for (auto i : block)
        if (auto* lin = std::get_if<LinearLayer>(&net.layer(i)); lin && lin->prunable)
          targets.push_back(i);
      extra = std::max(extra, extra_gradient_flops(net, ck.mask, targets, ck.batch_size));
    }
  }
  const auto flops = flops_report(ck.algorithm, forward_flops(net, dense, ck.batch_size),
                                  forward_flops(net, ck.mask, ck.batch_size),
                                  static_cast<double>(ck.local_epochs), extra);
  const auto memory = training_memory(ck.algorithm, model_storage(net, dense, bit_width).bytes(),
                                      storage.bytes(), activation_bytes(net, ck.batch_size, bit_width),
                                      bit_width, ck.topk_total);

  json tensors = json::array();
  for (const auto& e : storage.tensors) {
    tensors.push_back({{"layer", e.layer},
                       {"tensor", e.tensor},
                       {"scheme", to_string(e.scheme)},
                       {"n", e.n},
                       {"rows", e.rows},
                       {"cols", e.cols},
                       {"nnz", e.nnz},
                       {"position_bits", e.position_bits},
                       {"bits", e.total_bits}});
  }
  json j = {{"scheme", to_string(scheme)},
            {"bits", storage.total_bits},
            {"bytes", storage.bytes()},
            {"megabytes", storage.megabytes()},
            {"flops_peak", flops.peak},
            {"memory_total", memory.total},
            {"bit_width", bit_width},
            {"density", ck.mask.density()},
            {"tensors", std::move(tensors)},
            {"flops",
             {{"algorithm", to_string(flops.algorithm)},
              {"dense_forward", flops.dense_forward},
              {"sparse_forward", flops.sparse_forward},
              {"local_iterations", flops.local_iterations},
              {"extra", flops.extra},
              {"batch_size", ck.batch_size},
              {"flops_peak", flops.peak}}},
            {"memory",
             {{"algorithm", to_string(memory.algorithm)},
              {"dense_params", memory.dense_params},
              {"sparse_params", memory.sparse_params},
              {"activations", memory.activations},
              {"topk_bytes", memory.topk_bytes},
              {"topk_total", ck.topk_total},
              {"memory_total", memory.total}}}};
  return j.dump(2) + "\n";
}

}  // namespace fedtiny
