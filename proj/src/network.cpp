#include "polarloc/network.hpp"

#include <fstream>
#include <random>

#include "json.hpp"
#include "polarloc/config_json.hpp"

namespace ploc {

void NetworkConfig::validate() const {
  expects(block_channels.size() >= 3, "network: need a stem and at least two downsampling blocks");
  expects(angular_bins % total_stride() == 0 && radial_bins % total_stride() == 0,
          "network: input extents " + std::to_string(angular_bins) + "x" + std::to_string(radial_bins) +
              " must be divisible by " + std::to_string(total_stride()));
  expects(descriptor_dim == 2 * lateral_channels, "network: descriptor_dim must equal 2 x lateral_channels");
  expects(stem_kernel % 2 == 1, "network: stem kernel must be odd");
  expects(eca.kernel_size % 2 == 1, "network: ECA kernel must be odd");
  for (auto c : block_channels) expects(c >= 1, "network: channel counts must be positive");
}

template <typename T>
RadarLocModel<T> RadarLocModel<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  RadarLocModel model;
  model.config_ = config;
  const auto& ch = config.block_channels;
  const std::size_t k = config.stem_kernel;

  model.stem_ = {Conv2d<T>({1, ch[0], k, k, 1, 1}, rng), BatchNorm2d<T>(ch[0])};
  for (std::size_t b = 1; b < ch.size(); ++b) {
    DownBlock<T> block{
        {Conv2d<T>({ch[b - 1], ch[b], 2, 2, 2, 2}, rng), BatchNorm2d<T>(ch[b])},
        {Conv2d<T>({ch[b], ch[b], 3, 3, 1, 1}, rng), BatchNorm2d<T>(ch[b])},
        {Conv2d<T>({ch[b], ch[b], 3, 3, 1, 1}, rng), BatchNorm2d<T>(ch[b])},
        Eca<T>(config.eca, rng)};
    model.blocks_.push_back(std::move(block));
  }
  const std::size_t skip_ch = ch[ch.size() - 2], top_ch = ch.back(), lat = config.lateral_channels;
  model.lateral_skip_ = Conv2d<T>({skip_ch, lat, 1, 1, 1, 1}, rng);
  model.lateral_top_ = Conv2d<T>({top_ch, lat, 1, 1, 1, 1}, rng);
  model.upsample_ = TransposedConv2d<T>({lat, lat, 2, 2, 2, 2}, rng);
  model.gem_ = Gem<T>(config.gem);
  model.register_all();
  return model;
}

template <typename T>
void RadarLocModel<T>::register_all() {
  stem_.conv.register_parameters(params_, "stem.conv");
  stem_.bn.register_parameters(params_, buffers_, "stem.bn");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    auto& block = blocks_[b];
    block.down.conv.register_parameters(params_, prefix + ".down.conv");
    block.down.bn.register_parameters(params_, buffers_, prefix + ".down.bn");
    block.conv1.conv.register_parameters(params_, prefix + ".conv1.conv");
    block.conv1.bn.register_parameters(params_, buffers_, prefix + ".conv1.bn");
    block.conv2.conv.register_parameters(params_, prefix + ".conv2.conv");
    block.conv2.bn.register_parameters(params_, buffers_, prefix + ".conv2.bn");
    block.attention.register_parameters(params_, prefix + ".eca");
  }
  lateral_skip_.register_parameters(params_, "lateral_skip");
  lateral_top_.register_parameters(params_, "lateral_top");
  upsample_.register_parameters(params_, "upsample");
  gem_.register_parameters(params_, "gem");
}

template <typename T>
typename RadarLocModel<T>::Output RadarLocModel<T>::forward_features(const Tensor<T>& batch) {
  expects(batch.rank() == 4 && batch.dim(1) == 1 && batch.dim(2) == config_.angular_bins &&
              batch.dim(3) == config_.radial_bins,
          "network: expected input (N,1," + std::to_string(config_.angular_bins) + "," +
              std::to_string(config_.radial_bins) + "), got " + to_string(batch.shape()));
  Tensor<T> x = stem_.forward(batch, mode_);
  Tensor<T> skip;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = blocks_[b].forward(x, mode_);
    if (b + 2 == blocks_.size()) skip = x;
  }
  Tensor<T> up = upsample_.forward(lateral_top_.forward(x));
  Tensor<T> lateral = lateral_skip_.forward(skip);
  Tensor<T> features = ops::concat_channels(up, lateral);
  Tensor<T> descriptor = gem_.forward(features);
  check_finite<T>(descriptor.data(), "network descriptor (training diverged?)");
  return {features, descriptor};
}

template <typename T>
NamedTensors RadarLocModel<T>::state() const {
  NamedTensors out;
  for (const auto& [name, t] : params_) out.emplace_back(name, cast<float>(t));
  for (const auto& [name, t] : buffers_) out.emplace_back(name, cast<float>(t));
  return out;
}

template <typename T>
void RadarLocModel<T>::load_state(const NamedTensors& state) {
  std::size_t matched = 0;
  auto assign = [&](ParameterStore<T>& store) {
    for (auto& [name, t] : store) {
      auto it = std::find_if(state.begin(), state.end(), [&](const auto& e) { return e.first == name; });
      if (it == state.end()) throw DataError("checkpoint is missing tensor " + name);
      if (it->second.shape() != t.shape())
        throw DataError("checkpoint tensor " + name + " has shape " + to_string(it->second.shape()) +
                        ", model expects " + to_string(t.shape()));
      std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
      ++matched;
    }
  };
  assign(params_);
  assign(buffers_);
  if (matched != state.size()) throw DataError("checkpoint contains tensors unknown to this network");
}

template <typename T>
RadarLocModel<T> RadarLocModel<T>::from_state(const NetworkConfig& config, const NamedTensors& state) {
  RadarLocModel model = build(config, 0);
  model.load_state(state);
  return model;
}

void save_model(const std::filesystem::path& path, const RadarLocModel<float>& model) {
  save_checkpoint(path, model.state());
  std::ofstream sidecar(path.string() + ".json");
  if (!sidecar) throw DataError("cannot write model config sidecar for " + path.string());
  sidecar << nlohmann::json(model.config()).dump(2) << "\n";
}

RadarLocModel<float> load_model(const std::filesystem::path& path) {
  std::ifstream sidecar(path.string() + ".json");
  if (!sidecar) throw DataError("missing model config sidecar " + path.string() + ".json");
  NetworkConfig config;
  try {
    config = nlohmann::json::parse(sidecar).get<NetworkConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model config sidecar: " + std::string(e.what()));
  }
  return RadarLocModel<float>::from_state(config, load_checkpoint(path));
}

template class RadarLocModel<float>;
template class RadarLocModel<double>;

}  // namespace ploc
