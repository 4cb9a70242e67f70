#include "diffmatte/model.hpp"

namespace diffmatte {

void DecoderConfig::validate() const {
  if (n_c < 1 || n_f < 1 || n_d < 1) throw DomainError("decoder config: n_c, n_f and n_d must be >= 1");
  if (n_c < 2) throw DomainError("decoder config: n_c must include the noisy alpha and conditioning channels");
  if (feature_stride != 16 && feature_stride != 32) throw DomainError("decoder config: feature stride must be 16 or 32");
  if (time_frequencies < 0) throw DomainError("decoder config: negative time_frequencies");
  if (!up_channels.empty()) {
    if (up_channels.size() != down_channels().size() + 1) {
      throw DomainError("decoder config: up_channels needs " + std::to_string(down_channels().size() + 1) +
                        " entries");
    }
    for (int c : up_channels) {
      if (c < 1) throw DomainError("decoder config: up_channels entries must be >= 1");
    }
  }
}

std::vector<int> DecoderConfig::down_channels() const {
  std::vector<int> out{n_d, 2 * n_d, 4 * n_d};
  if (feature_stride == 32) out.push_back(4 * n_d);
  return out;
}

std::vector<int> DecoderConfig::resolved_up_channels() const {
  if (!up_channels.empty()) return up_channels;
  std::vector<int> out;
  if (feature_stride == 32) out.push_back(8 * n_d);
  for (int m : {8, 4, 2, 1}) out.push_back(m * n_d);
  return out;
}

std::vector<int> DecoderConfig::encoder_channels() const {
  std::vector<int> out{n_d, 2 * n_d, 4 * n_d};
  if (feature_stride == 32) out.push_back(4 * n_d);
  out.push_back(n_f);
  return out;
}

// ------------------------------------------------------- ReferenceEncoder

template <typename T>
ReferenceEncoder<T>::ReferenceEncoder(const DecoderConfig& cfg) : stride_(cfg.feature_stride) {
  cfg.validate();
  int in = cfg.n_c - 1;
  for (int c : cfg.encoder_channels()) {
    stages.emplace_back(in, c, 3, 2);
    in = c;
  }
}

template <typename T>
void ReferenceEncoder<T>::init(Rng& rng) {
  for (auto& s : stages) s.init(rng);
}

template <typename T>
Tensor<T> ReferenceEncoder<T>::forward(const Tensor<T>& conditioning, EncoderTape<T>* tape) const {
  if (conditioning.h() % stride_ != 0 || conditioning.w() % stride_ != 0) {
    throw DomainError("encoder: input " + conditioning.shape().str() + " not divisible by stride " +
                      std::to_string(stride_));
  }
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->pre_activations.clear();
  }
  Tensor<T> h = conditioning;
  for (const auto& stage : stages) {
    Tensor<T> pre = stage.forward(h);
    Tensor<T> next = silu(pre);
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(h));
      tape->pre_activations.push_back(std::move(pre));
    }
    h = std::move(next);
  }
  return h;
}

template <typename T>
Tensor<T> ReferenceEncoder<T>::backward(const EncoderTape<T>& tape, const Tensor<T>& d_features) {
  if (tape.inputs.size() != stages.size()) throw DomainError("encoder backward: tape was not recorded");
  Tensor<T> d = d_features;
  for (std::size_t i = stages.size(); i-- > 0;) {
    d = silu_backward(tape.pre_activations[i], d);
    d = stages[i].backward(tape.inputs[i], d);
  }
  return d;
}

// ------------------------------------------------------ DiffusionDecoder

template <typename T>
DiffusionDecoder<T>::DiffusionDecoder(const DecoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const auto dc = cfg.down_channels();
  const auto uc = cfg.resolved_up_channels();
  const int depth = static_cast<int>(dc.size());
  int in = cfg.n_c;
  for (int c : dc) {
    down.emplace_back(in, c, 2, cfg.time_frequencies);
    in = c;
  }
  for (int j = 0; j <= depth; ++j) {
    const int from_below = j == 0 ? cfg.n_f : uc[j - 1];
    const int skip = j == depth ? cfg.n_c : dc[depth - 1 - j];
    up.emplace_back(from_below + skip, uc[j], 1, cfg.time_frequencies);
  }
  head = Conv2d<T>(uc.back(), 1, 3, 1);
}

template <typename T>
void DiffusionDecoder<T>::init(Rng& rng) {
  for (auto& b : down) b.init(rng);
  for (auto& b : up) b.init(rng);
  head.init(rng);
}

template <typename T>
void DiffusionDecoder<T>::check_shapes(const Tensor<T>& input, std::span<const double> t,
                                       const Tensor<T>& features) const {
  const int s = cfg_.feature_stride;
  if (input.c() != cfg_.n_c) {
    throw DomainError("decoder: expected " + std::to_string(cfg_.n_c) + " input channels, got " +
                      input.shape().str());
  }
  if (input.h() % s != 0 || input.w() % s != 0 || input.h() == 0 || input.w() == 0) {
    throw DomainError("decoder: input extents " + input.shape().str() + " not divisible by feature stride " +
                      std::to_string(s));
  }
  const Shape want{input.n(), cfg_.n_f, input.h() / s, input.w() / s};
  if (!(features.shape() == want)) {
    throw DomainError("decoder: feature shape " + features.shape().str() + ", expected " + want.str());
  }
  if (static_cast<int>(t.size()) != input.n()) throw DomainError("decoder: one time value per sample required");
  for (double v : t) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("decoder: time outside [0, 1]");
  }
}

template <typename T>
Tensor<T> DiffusionDecoder<T>::forward(const Tensor<T>& input, std::span<const double> t,
                                       const Tensor<T>& features, DecoderTape<T>* tape) const {
  check_shapes(input, t, features);
  const std::size_t depth = down.size();
  if (tape != nullptr) {
    tape->t.assign(t.begin(), t.end());
    tape->down.assign(depth, {});
    tape->up.assign(depth + 1, {});
    tape->skip_channels.clear();
  }
  std::vector<Tensor<T>> skips;
  skips.reserve(depth + 1);
  skips.push_back(input);
  for (std::size_t i = 0; i < depth; ++i) {
    skips.push_back(down[i].forward(skips.back(), t, tape ? &tape->down[i] : nullptr));
  }
  Tensor<T> u = features;
  for (std::size_t j = 0; j <= depth; ++j) {
    if (tape != nullptr) tape->skip_channels.push_back(u.c());
    Tensor<T> joined = concat_channels(upsample2x(u), skips[depth - j]);
    u = up[j].forward(joined, t, tape ? &tape->up[j] : nullptr);
  }
  Tensor<T> alpha = logistic(head.forward(u));
  if (tape != nullptr) {
    tape->head_input = std::move(u);
    tape->output = alpha;
  }
  return alpha;
}

template <typename T>
typename DiffusionDecoder<T>::Gradients DiffusionDecoder<T>::backward(const DecoderTape<T>& tape,
                                                                       const Tensor<T>& d_alpha) {
  const std::size_t depth = down.size();
  if (tape.up.size() != depth + 1) throw DomainError("decoder backward: tape was not recorded");
  const std::span<const double> t(tape.t);
  Tensor<T> du = head.backward(tape.head_input, logistic_backward(tape.output, d_alpha));
  std::vector<Tensor<T>> dskips(depth + 1);
  for (std::size_t j = depth + 1; j-- > 0;) {
    Tensor<T> d_joined = up[j].backward(tape.up[j], t, du);
    auto [d_up, d_skip] = split_channels(d_joined, tape.skip_channels[j]);
    auto& slot = dskips[depth - j];
    if (slot.empty()) {
      slot = std::move(d_skip);
    } else {
      slot += d_skip;
    }
    du = upsample2x_backward(d_up);
  }
  for (std::size_t i = depth; i-- > 0;) {
    dskips[i] += down[i].backward(tape.down[i], t, dskips[i + 1]);
  }
  return {std::move(dskips[0]), std::move(du)};
}

// --------------------------------------------------------- MattingModelT

template <typename T>
MattingModelT<T>::MattingModelT(const ModelConfig& cfg, Rng& rng)
    : encoder(cfg.net), decoder(cfg.net), cfg_(cfg) {
  cfg.schedule.validate();
  encoder.init(rng);
  decoder.init(rng);
}

template <typename T>
Tensor<T> MattingModelT<T>::encode(const Tensor<T>& conditioning, EncoderTape<T>* tape) const {
  if (conditioning.c() != cfg_.net.n_c - 1) {
    throw DomainError("encode: expected " + std::to_string(cfg_.net.n_c - 1) + " conditioning channels, got " +
                      conditioning.shape().str());
  }
  encoder_calls_.bump();
  return encoder.forward(conditioning, tape);
}

template <typename T>
Tensor<T> MattingModelT<T>::decode(const Tensor<T>& input, std::span<const double> t, const Tensor<T>& features,
                                   DecoderTape<T>* tape) const {
  decoder_calls_.bump();
  return decoder.forward(input, t, features, tape);
}

template <typename T>
void MattingModelT<T>::zero_grad() {
  visit([](const std::string&, Tensor<T>&, Tensor<T>& g) { g.zero(); });
}

template <typename T>
std::size_t MattingModelT<T>::parameter_count() const {
  std::size_t count = 0;
  visit([&](const std::string&, const Tensor<T>& v, const Tensor<T>&) { count += v.size(); });
  return count;
}

template class ReferenceEncoder<float>;
template class ReferenceEncoder<double>;
template class DiffusionDecoder<float>;
template class DiffusionDecoder<double>;
template class MattingModelT<float>;
template class MattingModelT<double>;

}  // namespace diffmatte
