#pragma once

#include <cmath>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

inline constexpr float kTrimapBackground = 0.0f;
inline constexpr float kTrimapUnknown = 0.5f;
inline constexpr float kTrimapForeground = 1.0f;

// Labels are stored as exact values; the 0.25 bands absorb 8-bit quantisation (128/255).
inline bool is_unknown(float label) { return std::abs(label - kTrimapUnknown) < 0.25f; }
inline bool is_foreground(float label) { return label >= 0.75f; }
inline bool is_background(float label) { return label <= 0.25f; }

/// Throws DomainError unless every entry is one of {0, 0.5, 1}.
inline void validate_trimap(const Tensor<float>& trimap) {
  if (trimap.c() != 1) throw DomainError("trimap must have one channel, got " + trimap.shape().str());
  for (float v : trimap.values()) {
    if (v != kTrimapBackground && v != kTrimapUnknown && v != kTrimapForeground) {
      throw DomainError("trimap value " + std::to_string(v) + " is not one of {0, 0.5, 1}");
    }
  }
}

/// Snaps near-label values (e.g. 8-bit 128/255) to the exact labels.
inline Tensor<float> snap_trimap(const Tensor<float>& raw) {
  Tensor<float> out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = raw[i];
    out[i] = is_foreground(v) ? kTrimapForeground : (is_background(v) ? kTrimapBackground : kTrimapUnknown);
  }
  return out;
}

/// Forces alpha to 1 on known foreground and 0 on known background.
inline Tensor<float> apply_known_regions(const Tensor<float>& alpha, const Tensor<float>& trimap) {
  alpha.require_same_shape(trimap, "apply_known_regions");
  Tensor<float> out = alpha;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (is_foreground(trimap[i])) out[i] = 1.0f;
    else if (is_background(trimap[i])) out[i] = 0.0f;
  }
  return out;
}

inline std::size_t count_unknown(const Tensor<float>& trimap) {
  std::size_t n = 0;
  for (float v : trimap.values()) n += is_unknown(v) ? 1 : 0;
  return n;
}

}  // namespace diffmatte
