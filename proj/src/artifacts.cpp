#include "mrshift/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mrshift/error.hpp"

namespace mrshift {

namespace {

constexpr const char* kKindNames[] = {"spike", "rician", "bias_field", "ghosting", "rigid_motion"};

void check_image(const Tensor& x, const char* op) {
  if (x.rank() != 2 || x.is_complex())
    throw ShapeError(std::string(op) + ": expected a real 2-D image, got " + shape_str(x.dims()));
  if (x.dim(0) < 2 || x.dim(1) < 2)
    throw ShapeError(std::string(op) + ": image extents must be >= 2");
}

std::string ghost_axis_str(GhostAxis a) {
  switch (a) {
    case GhostAxis::Rows: return "rows";
    case GhostAxis::Cols: return "cols";
    case GhostAxis::Random: return "random";
  }
  return "random";
}

GhostAxis ghost_axis_from_string(const std::string& s) {
  if (s == "rows") return GhostAxis::Rows;
  if (s == "cols") return GhostAxis::Cols;
  if (s == "random") return GhostAxis::Random;
  throw ParamError("unknown ghosting axis '" + s + "'");
}

}  // namespace

std::string to_string(ArtifactKind kind) { return kKindNames[static_cast<int>(kind)]; }

ArtifactKind artifact_kind_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == kKindNames[i]) return static_cast<ArtifactKind>(i);
  throw ParamError("unknown artifact kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// spec serialization

nlohmann::json to_json(const ArtifactSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind());
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SpikeParams>) {
          j["intensity"] = p.intensity;
          j["max_spikes"] = p.max_spikes;
        } else if constexpr (std::is_same_v<P, RicianParams>) {
          j["snr"] = p.snr;
        } else if constexpr (std::is_same_v<P, BiasFieldParams>) {
          j["order"] = p.order;
          j["max_coeff"] = p.max_coeff;
        } else if constexpr (std::is_same_v<P, GhostingParams>) {
          j["num_ghosts"] = p.num_ghosts;
          j["strength_max"] = p.strength_max;
          j["axis"] = ghost_axis_str(p.axis);
        } else {
          j["translation_mm"] = p.translation_mm;
          j["rotation_deg"] = p.rotation_deg;
          j["num_movements"] = p.num_movements;
        }
      },
      spec.params);
  j["seed"] = spec.seed;
  return j;
}

ArtifactSpec artifact_spec_from_json(const nlohmann::json& j) {
  ArtifactSpec spec;
  try {
    const auto kind = artifact_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.value("seed", std::uint64_t{0});
    switch (kind) {
      case ArtifactKind::Spike: {
        SpikeParams p;
        p.intensity = j.at("intensity").get<double>();
        p.max_spikes = j.value("max_spikes", p.max_spikes);
        spec.params = p;
        break;
      }
      case ArtifactKind::Rician:
        spec.params = RicianParams{j.at("snr").get<double>()};
        break;
      case ArtifactKind::BiasField: {
        BiasFieldParams p;
        p.order = j.value("order", p.order);
        p.max_coeff = j.at("max_coeff").get<double>();
        spec.params = p;
        break;
      }
      case ArtifactKind::Ghosting: {
        GhostingParams p;
        p.num_ghosts = j.value("num_ghosts", p.num_ghosts);
        p.strength_max = j.at("strength_max").get<double>();
        p.axis = ghost_axis_from_string(j.value("axis", std::string("random")));
        spec.params = p;
        break;
      }
      case ArtifactKind::RigidMotion: {
        MotionParams p;
        if (j.contains("level")) p = motion_level(j.at("level").get<int>());
        p.translation_mm = j.value("translation_mm", p.translation_mm);
        p.rotation_deg = j.value("rotation_deg", p.rotation_deg);
        p.num_movements = j.value("num_movements", p.num_movements);
        spec.params = p;
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("artifact spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

void validate(const ArtifactSpec& spec) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SpikeParams>) {
          if (!(p.intensity > 0)) throw ParamError("spike: intensity must be > 0");
          if (p.max_spikes < 1) throw ParamError("spike: max_spikes must be >= 1");
        } else if constexpr (std::is_same_v<P, RicianParams>) {
          if (!(p.snr > 0)) throw ParamError("rician: snr must be > 0");
        } else if constexpr (std::is_same_v<P, BiasFieldParams>) {
          if (p.order < 1) throw ParamError("bias_field: order must be >= 1");
          if (!(p.max_coeff >= 0)) throw ParamError("bias_field: max_coeff must be >= 0");
        } else if constexpr (std::is_same_v<P, GhostingParams>) {
          if (p.num_ghosts < 2) throw ParamError("ghosting: num_ghosts must be >= 2");
          if (!(p.strength_max >= 0)) throw ParamError("ghosting: strength_max must be >= 0");
        } else {
          if (!(p.translation_mm >= 0) || !(p.rotation_deg >= 0))
            throw ParamError("rigid_motion: translation and rotation must be >= 0");
          if (p.num_movements < 1) throw ParamError("rigid_motion: num_movements must be >= 1");
        }
      },
      spec.params);
}

MotionParams motion_level(int level) {
  if (level < 1 || level > 5) throw ParamError("rigid_motion: level must be in 1..5");
  return MotionParams{2.0 * level, 5.0 * level, 2};
}

IntensityGrid default_grid(ArtifactKind kind) {
  IntensityGrid g{kind, {}, {}};
  const std::vector<double> d = {0.5, 0.7, 1.0, 1.5, 2.0};
  switch (kind) {
    case ArtifactKind::Spike:
      for (double v : d) g.levels.push_back(SpikeParams{v, 3});
      g.labels = d;
      break;
    case ArtifactKind::Rician:
      g.labels = {50, 20, 10, 5, 4};
      for (double v : g.labels) g.levels.push_back(RicianParams{v});
      break;
    case ArtifactKind::BiasField:
      for (double v : d) g.levels.push_back(BiasFieldParams{3, v});
      g.labels = d;
      break;
    case ArtifactKind::Ghosting:
      for (double v : d) g.levels.push_back(GhostingParams{7, v, GhostAxis::Random});
      g.labels = d;
      break;
    case ArtifactKind::RigidMotion:
      for (int l = 1; l <= 5; ++l) {
        g.levels.push_back(motion_level(l));
        g.labels.push_back(l);
      }
      break;
  }
  return g;
}

// ---------------------------------------------------------------------------
// spike

KSpace spike_kspace(const Tensor& x, double intensity, int max_spikes, std::uint64_t seed,
                    const ArtifactHooks* hooks) {
  check_image(x, "spike");
  if (!(intensity > 0)) throw ParamError("spike: intensity must be > 0");
  if (max_spikes < 1) throw ParamError("spike: max_spikes must be >= 1");

  KSpace k = to_kspace(x);
  const std::size_t h = k.rows(), w = k.cols();
  const std::size_t dc = (h / 2) * w + w / 2;
  const double value = intensity * max_spectrum_magnitude(k);

  std::vector<std::size_t> bins;
  if (hooks && hooks->spike_bins) {
    for (auto [r, c] : *hooks->spike_bins) {
      if (r >= h || c >= w) throw ParamError("spike: forced bin outside the spectrum");
      bins.push_back(r * w + c);
    }
  } else {
    Rng rng(seed);
    const auto n = rng.uniform_int(1, max_spikes);
    for (std::int64_t i = 0; i < n; ++i) {
      auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h * w) - 2));
      if (idx >= dc) ++idx;
      bins.push_back(idx);
    }
  }

  auto z = k.spectrum.cvalues();
  for (auto idx : bins) z[idx] = cplx(value, 0.0);
  return k;
}

Tensor apply_spike(const Tensor& x, double intensity, int max_spikes, std::uint64_t seed,
                   const ArtifactHooks* hooks) {
  return to_image(spike_kspace(x, intensity, max_spikes, seed, hooks));
}

// ---------------------------------------------------------------------------
// Rician noise

Tensor apply_rician(const Tensor& x, double snr, std::uint64_t seed, const ArtifactHooks* hooks) {
  check_image(x, "rician");
  if (!(snr > 0)) throw ParamError("rician: snr must be > 0");

  double sigma;
  if (hooks && hooks->rician_sigma) {
    sigma = *hooks->rician_sigma;
  } else {
    double peak = 0.0;
    for (double v : x.values()) peak = std::max(peak, v);
    sigma = peak / snr;
  }
  if (sigma == 0.0) return x;

  Rng rng(seed);
  const auto src = x.values();
  const std::size_t n = src.size();
  std::vector<double> re(n), im(n);
  for (auto& v : re) v = sigma * rng.normal();
  for (auto& v : im) v = sigma * rng.normal();

  Tensor out(x.dims());
  auto dst = out.values();
  for (std::size_t i = 0; i < n; ++i) dst[i] = std::hypot(src[i] + re[i], im[i]);
  return out;
}

// ---------------------------------------------------------------------------
// bias field

std::vector<double> sample_bias_coefficients(int order, double max_coeff, std::uint64_t seed) {
  if (order < 1) throw ParamError("bias_field: order must be >= 1");
  if (!(max_coeff >= 0)) throw ParamError("bias_field: max_coeff must be >= 0");
  Rng rng(seed);
  std::vector<double> coeffs;
  for (int i = 0; i <= order; ++i)
    for (int j = 0; j <= order - i; ++j) coeffs.push_back(rng.uniform(-max_coeff, max_coeff));
  return coeffs;
}

Tensor bias_field(std::size_t rows, std::size_t cols, int order, const std::vector<double>& coeffs) {
  const std::size_t expected = static_cast<std::size_t>((order + 1) * (order + 2) / 2);
  if (coeffs.size() != expected) throw ParamError("bias_field: coefficient count mismatch");
  Tensor field({rows, cols});
  std::vector<double> upow(order + 1), vpow(order + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double u = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(rows - 1);
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(cols - 1);
      upow[0] = vpow[0] = 1.0;
      for (int p = 1; p <= order; ++p) {
        upow[p] = upow[p - 1] * u;
        vpow[p] = vpow[p - 1] * v;
      }
      double poly = 0.0;
      std::size_t idx = 0;
      for (int i = 0; i <= order; ++i)
        for (int j = 0; j <= order - i; ++j) poly += coeffs[idx++] * upow[i] * vpow[j];
      field(r, c) = std::exp(poly);
    }
  }
  return field;
}

Tensor apply_bias_field(const Tensor& x, int order, double max_coeff, std::uint64_t seed) {
  check_image(x, "bias_field");
  const auto coeffs = sample_bias_coefficients(order, max_coeff, seed);
  const Tensor field = bias_field(x.dim(0), x.dim(1), order, coeffs);
  Tensor out = x;
  auto dst = out.values();
  auto f = field.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= f[i];
  return out;
}

// ---------------------------------------------------------------------------
// ghosting

std::vector<std::size_t> ghost_planes(std::size_t num_planes, int num_ghosts) {
  if (num_ghosts < 2) throw ParamError("ghosting: num_ghosts must be >= 2");
  const auto step = static_cast<std::size_t>(num_ghosts);
  const std::size_t dc = num_planes / 2;
  std::vector<std::size_t> planes;
  for (std::size_t off = step; off <= dc; off += step) planes.push_back(dc - off);
  std::reverse(planes.begin(), planes.end());
  for (std::size_t off = step; dc + off < num_planes; off += step) planes.push_back(dc + off);
  return planes;
}

KSpace ghosting_kspace(const Tensor& x, int num_ghosts, double strength_max, GhostAxis axis,
                       std::uint64_t seed, const ArtifactHooks* hooks) {
  check_image(x, "ghosting");
  if (num_ghosts < 2) throw ParamError("ghosting: num_ghosts must be >= 2");
  if (!(strength_max >= 0)) throw ParamError("ghosting: strength_max must be >= 0");

  Rng rng(seed);
  PhaseAxis phase = PhaseAxis::Rows;
  if (axis == GhostAxis::Cols) phase = PhaseAxis::Cols;
  if (axis == GhostAxis::Random) phase = rng.uniform() < 0.5 ? PhaseAxis::Rows : PhaseAxis::Cols;
  double s = rng.uniform(0.0, strength_max);
  if (hooks && hooks->ghost_strength) s = *hooks->ghost_strength;

  KSpace k = to_kspace(x, phase);
  const double factor = std::max(0.0, 1.0 - s);
  for (auto p : ghost_planes(k.num_planes(), num_ghosts)) k.scale_plane(p, factor);
  return k;
}

Tensor apply_ghosting(const Tensor& x, int num_ghosts, double strength_max, GhostAxis axis,
                      std::uint64_t seed, const ArtifactHooks* hooks) {
  return to_image(ghosting_kspace(x, num_ghosts, strength_max, axis, seed, hooks));
}

// ---------------------------------------------------------------------------
// rigid motion

Tensor rigid_transform(const Tensor& x, const RigidTransform& t) {
  check_image(x, "rigid_transform");
  const std::size_t h = x.dim(0), w = x.dim(1);
  const double cr = 0.5 * static_cast<double>(h - 1);
  const double cc = 0.5 * static_cast<double>(w - 1);
  const double ang = t.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(ang), sn = std::sin(ang);

  auto sample = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w))
      return 0.0;
    return x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };

  Tensor out({h, w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Inverse map: output pixel p comes from R^T (p - center - shift) + center.
      const double dr = static_cast<double>(r) - cr - t.shift_rows;
      const double dc = static_cast<double>(c) - cc - t.shift_cols;
      const double sr = cs * dr + sn * dc + cr;
      const double sc = -sn * dr + cs * dc + cc;
      const double fr = std::floor(sr), fc = std::floor(sc);
      const double ar = sr - fr, ac = sc - fc;
      const auto r0 = static_cast<std::ptrdiff_t>(fr);
      const auto c0 = static_cast<std::ptrdiff_t>(fc);
      double v = (1 - ar) * (1 - ac) * sample(r0, c0);
      if (ac != 0.0) v += (1 - ar) * ac * sample(r0, c0 + 1);
      if (ar != 0.0) v += ar * (1 - ac) * sample(r0 + 1, c0);
      if (ar != 0.0 && ac != 0.0) v += ar * ac * sample(r0 + 1, c0 + 1);
      out(r, c) = v;
    }
  }
  return out;
}

KSpace motion_kspace(const Tensor& x, double translation_mm, double rotation_deg,
                     int num_movements, std::uint64_t seed, const ArtifactHooks* hooks) {
  check_image(x, "rigid_motion");
  if (!(translation_mm >= 0) || !(rotation_deg >= 0))
    throw ParamError("rigid_motion: translation and rotation must be >= 0");
  if (num_movements < 1) throw ParamError("rigid_motion: num_movements must be >= 1");

  std::vector<RigidTransform> transforms;
  if (hooks && hooks->motion_transforms) {
    transforms = *hooks->motion_transforms;
  } else {
    Rng rng(seed);
    for (int i = 0; i < num_movements; ++i) {
      RigidTransform t;
      t.shift_rows = rng.uniform(-translation_mm, translation_mm);
      t.shift_cols = rng.uniform(-translation_mm, translation_mm);
      t.angle_deg = rng.uniform(-rotation_deg, rotation_deg);
      transforms.push_back(t);
    }
  }

  KSpace k = to_kspace(x);
  const std::size_t planes = k.num_planes();
  std::vector<std::size_t> starts;
  if (hooks && hooks->motion_block_starts) {
    starts = *hooks->motion_block_starts;
    if (starts.size() != transforms.size())
      throw ParamError("rigid_motion: one block start per transform required");
  } else {
    const std::size_t blocks = transforms.size() + 1;
    for (std::size_t b = 1; b < blocks; ++b) starts.push_back(b * planes / blocks);
  }
  starts.push_back(planes);

  const std::size_t w = k.cols();
  auto dst = k.spectrum.cvalues();
  for (std::size_t b = 0; b < transforms.size(); ++b) {
    const KSpace moved = to_kspace(rigid_transform(x, transforms[b]));
    auto src = moved.spectrum.cvalues();
    for (std::size_t p = starts[b]; p < std::max(starts[b], starts[b + 1]); ++p)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(p * w), w,
                  dst.begin() + static_cast<std::ptrdiff_t>(p * w));
  }
  return k;
}

Tensor apply_rigid_motion(const Tensor& x, double translation_mm, double rotation_deg,
                          int num_movements, std::uint64_t seed, const ArtifactHooks* hooks) {
  return to_image(motion_kspace(x, translation_mm, rotation_deg, num_movements, seed, hooks));
}

// ---------------------------------------------------------------------------

Tensor apply(const ArtifactSpec& spec, const Tensor& x, const ArtifactHooks* hooks) {
  validate(spec);
  return std::visit(
      [&](const auto& p) -> Tensor {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SpikeParams>)
          return apply_spike(x, p.intensity, p.max_spikes, spec.seed, hooks);
        else if constexpr (std::is_same_v<P, RicianParams>)
          return apply_rician(x, p.snr, spec.seed, hooks);
        else if constexpr (std::is_same_v<P, BiasFieldParams>)
          return apply_bias_field(x, p.order, p.max_coeff, spec.seed);
        else if constexpr (std::is_same_v<P, GhostingParams>)
          return apply_ghosting(x, p.num_ghosts, p.strength_max, p.axis, spec.seed, hooks);
        else
          return apply_rigid_motion(x, p.translation_mm, p.rotation_deg, p.num_movements,
                                    spec.seed, hooks);
      },
      spec.params);
}

Tensor compose(const std::vector<ArtifactSpec>& specs, const Tensor& x) {
  Tensor out = x;
  for (const auto& s : specs) out = apply(s, out);
  return out;
}

}  // namespace mrshift
