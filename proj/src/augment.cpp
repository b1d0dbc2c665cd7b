#include "lus/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lus/error.hpp"

namespace lus {

void AugmentParams::validate() const {
  const auto bad = [](const char* field) {
    return Error(ErrorKind::InvalidConfig,
                 std::string(field) + " is out of range");
  };
  if (!(max_rotation_deg >= 0.0) || !std::isfinite(max_rotation_deg))
    throw bad("max_rotation_deg");
  if (!(max_shift_frac >= 0.0 && max_shift_frac < 1.0))
    throw bad("max_shift_frac");
  if (!(max_scale_delta >= 0.0 && max_scale_delta < 1.0))
    throw bad("max_scale_delta");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw bad("hflip_prob");
}

AffineDraw draw_transform(const AugmentParams& params, Rng& rng) {
  AffineDraw d;
  d.rotation_deg =
      rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
  d.shift_x_frac = rng.uniform(-params.max_shift_frac, params.max_shift_frac);
  d.shift_y_frac = rng.uniform(-params.max_shift_frac, params.max_shift_frac);
  d.scale = rng.uniform(1.0 - params.max_scale_delta,
                        1.0 + params.max_scale_delta);
  d.hflip = rng.bernoulli(params.hflip_prob);
  return d;
}

RawImage apply_transform(const RawImage& image, const AffineDraw& draw) {
  image.validate();
  RawImage out(image.width, image.height, image.channels);

  const double cx = image.width / 2.0;
  const double cy = image.height / 2.0;
  const double theta = draw.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double tx = draw.shift_x_frac * image.width;
  const double ty = draw.shift_y_frac * image.height;
  const double inv_scale = 1.0 / draw.scale;

  // Forward map: p' = c + t + s * R * F * (p - c). Each output pixel centre
  // is pulled back through the inverse.
  const auto sample = [&](double sx, double sy, int c) {
    const double u = sx - 0.5;
    const double v = sy - 0.5;
    const double x0f = std::floor(u);
    const double y0f = std::floor(v);
    const double fx = u - x0f;
    const double fy = v - y0f;
    const int x0 = static_cast<int>(x0f);
    const int y0 = static_cast<int>(y0f);
    const auto pixel = [&](int x, int y) -> double {
      if (x < 0 || y < 0 || x >= image.width || y >= image.height) return 0.0;
      return image.at(x, y, c);
    };
    return (1 - fx) * (1 - fy) * pixel(x0, y0) +
           fx * (1 - fy) * pixel(x0 + 1, y0) +
           (1 - fx) * fy * pixel(x0, y0 + 1) + fx * fy * pixel(x0 + 1, y0 + 1);
  };

  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double dx = (x + 0.5 - cx - tx) * inv_scale;
      const double dy = (y + 0.5 - cy - ty) * inv_scale;
      double rx = cos_t * dx + sin_t * dy;
      const double ry = -sin_t * dx + cos_t * dy;
      if (draw.hflip) rx = -rx;
      const double sx = cx + rx;
      const double sy = cy + ry;
      for (int c = 0; c < out.channels; ++c) {
        const double value = std::round(sample(sx, sy, c));
        out.at(x, y, c) =
            static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
      }
    }
  }
  return out;
}

RawImage augment(const RawImage& image, const AugmentParams& params,
                 Rng& rng) {
  return apply_transform(image, draw_transform(params, rng));
}

}  // namespace lus
