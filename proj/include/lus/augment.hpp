#pragma once

#include <cstdint>
#include <string>

#include "lus/image.hpp"
#include "lus/rng.hpp"

namespace lus {

/// Magnitudes of the random geometric transform. The defaults are mild
/// settings; each one can be overridden from the run config.
struct AugmentParams {
  double max_rotation_deg = 10.0;
  double max_shift_frac = 0.1;
  double max_scale_delta = 0.1;
  double hflip_prob = 0.5;

  /// Throws Error(InvalidConfig) when a field is out of range.
  void validate() const;

  static AugmentParams none() { return {0.0, 0.0, 0.0, 0.0}; }
};

/// One concrete draw of the transform.
struct AffineDraw {
  double rotation_deg = 0.0;
  double shift_x_frac = 0.0;
  double shift_y_frac = 0.0;
  double scale = 1.0;
  bool hflip = false;
};

/// Draws rotation, x shift, y shift, scale and flip, in that order. All five
/// values are always drawn so the stream position does not depend on params.
AffineDraw draw_transform(const AugmentParams& params, Rng& rng);

/// Applies a draw about the image centre with bilinear sampling and constant
/// zero fill outside the source frame.
RawImage apply_transform(const RawImage& image, const AffineDraw& draw);

RawImage augment(const RawImage& image, const AugmentParams& params,
                 Rng& rng);

/// Generator seed for augmented copy `copy_index` of `image_id`.
inline std::uint64_t augment_seed(std::uint64_t master_seed,
                                  const std::string& image_id,
                                  std::uint32_t copy_index) noexcept {
  return master_seed + fnv1a64(image_id) + copy_index;
}

}  // namespace lus
