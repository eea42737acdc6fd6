#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mrshift/kspace.hpp"
#include "mrshift/rng.hpp"
#include "mrshift/tensor.hpp"

namespace mrshift {

enum class ArtifactKind { Spike, Rician, BiasField, Ghosting, RigidMotion };

std::string to_string(ArtifactKind kind);
ArtifactKind artifact_kind_from_string(const std::string& s);

enum class GhostAxis { Rows, Cols, Random };

struct SpikeParams {
  double intensity = 1.0;  // spike bin magnitude / spectrum maximum
  int max_spikes = 3;
};

struct RicianParams {
  double snr = 10.0;  // sigma = max(x) / snr
};

struct BiasFieldParams {
  int order = 3;
  double max_coeff = 0.5;
};

struct GhostingParams {
  int num_ghosts = 7;  // plane period along the phase axis
  double strength_max = 0.5;
  GhostAxis axis = GhostAxis::Random;
};

struct MotionParams {
  double translation_mm = 2.0;  // 1 px == 1 mm
  double rotation_deg = 5.0;
  int num_movements = 2;
};

using ArtifactParams =
    std::variant<SpikeParams, RicianParams, BiasFieldParams, GhostingParams, MotionParams>;

struct ArtifactSpec {
  ArtifactParams params;
  std::uint64_t seed = 0;

  ArtifactKind kind() const { return static_cast<ArtifactKind>(params.index()); }
};

nlohmann::json to_json(const ArtifactSpec& spec);
ArtifactSpec artifact_spec_from_json(const nlohmann::json& j);
// Throws ParamError when a parameter is outside its documented range.
void validate(const ArtifactSpec& spec);

// Ordered severity levels of one artifact kind. `labels` hold the scalar
// reported in sweep output (d, SNR, coefficient bound or motion level).
struct IntensityGrid {
  ArtifactKind kind;
  std::vector<double> labels;
  std::vector<ArtifactParams> levels;
};

// Default grids: spike/bias/ghost {0.5, 0.7, 1.0, 1.5, 2.0}; Rician SNR
// {50, 20, 10, 5, 4}; motion level l in 1..5 as (2l mm, 5l deg).
IntensityGrid default_grid(ArtifactKind kind);
MotionParams motion_level(int level);

struct RigidTransform {
  double shift_rows = 0.0;  // pixels
  double shift_cols = 0.0;
  double angle_deg = 0.0;  // about the image center
};

// Overrides for internally sampled values, used by exact-value tests.
// Only reachable through the library API; the CLI never fills these.
struct ArtifactHooks {
  std::optional<std::vector<std::pair<std::size_t, std::size_t>>> spike_bins;  // centered coords
  std::optional<double> rician_sigma;
  std::optional<double> ghost_strength;
  std::optional<std::vector<RigidTransform>> motion_transforms;
  // First phase plane of each transformed block (size == transform count).
  std::optional<std::vector<std::size_t>> motion_block_starts;
};

// Each corruption is available both as the corrupted k-space and as the
// magnitude image reconstructed from it (to_image of the former).
KSpace spike_kspace(const Tensor& x, double intensity, int max_spikes, std::uint64_t seed,
                    const ArtifactHooks* hooks = nullptr);
Tensor apply_spike(const Tensor& x, double intensity, int max_spikes, std::uint64_t seed,
                   const ArtifactHooks* hooks = nullptr);

Tensor apply_rician(const Tensor& x, double snr, std::uint64_t seed,
                    const ArtifactHooks* hooks = nullptr);

// Coefficients c_ij for i + j <= order, ordered by i then j.
std::vector<double> sample_bias_coefficients(int order, double max_coeff, std::uint64_t seed);
// exp(P(u, v)) on the grid u, v in [-1, 1] (u along rows).
Tensor bias_field(std::size_t rows, std::size_t cols, int order, const std::vector<double>& coeffs);
Tensor apply_bias_field(const Tensor& x, int order, double max_coeff, std::uint64_t seed);

// Phase planes attenuated by ghosting: offsets +-N, +-2N, ... from DC.
std::vector<std::size_t> ghost_planes(std::size_t num_planes, int num_ghosts);
KSpace ghosting_kspace(const Tensor& x, int num_ghosts, double strength_max, GhostAxis axis,
                       std::uint64_t seed, const ArtifactHooks* hooks = nullptr);
Tensor apply_ghosting(const Tensor& x, int num_ghosts, double strength_max, GhostAxis axis,
                      std::uint64_t seed, const ArtifactHooks* hooks = nullptr);

// Bilinear resampling with zero padding.
Tensor rigid_transform(const Tensor& x, const RigidTransform& t);
KSpace motion_kspace(const Tensor& x, double translation_mm, double rotation_deg,
                     int num_movements, std::uint64_t seed, const ArtifactHooks* hooks = nullptr);
Tensor apply_rigid_motion(const Tensor& x, double translation_mm, double rotation_deg,
                          int num_movements, std::uint64_t seed,
                          const ArtifactHooks* hooks = nullptr);

Tensor apply(const ArtifactSpec& spec, const Tensor& x, const ArtifactHooks* hooks = nullptr);
// Applies the specs in order; an empty list is the identity.
Tensor compose(const std::vector<ArtifactSpec>& specs, const Tensor& x);

}  // namespace mrshift
