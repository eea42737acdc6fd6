#include "mrshift/kspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mrshift/error.hpp"
#include "mrshift/fft.hpp"
#include "mrshift/tensor_io.hpp"

namespace mrshift {

std::string to_string(PhaseAxis axis) { return axis == PhaseAxis::Rows ? "rows" : "cols"; }

PhaseAxis phase_axis_from_string(const std::string& s) {
  if (s == "rows") return PhaseAxis::Rows;
  if (s == "cols") return PhaseAxis::Cols;
  throw ParamError("unknown phase axis '" + s + "'");
}

std::size_t KSpace::num_planes() const {
  return phase_axis == PhaseAxis::Rows ? rows() : cols();
}

std::size_t KSpace::dc_plane() const { return centered ? num_planes() / 2 : 0; }

void KSpace::scale_plane(std::size_t p, double factor) {
  const std::size_t w = cols();
  auto z = spectrum.cvalues();
  if (phase_axis == PhaseAxis::Rows) {
    for (std::size_t c = 0; c < w; ++c) z[p * w + c] *= factor;
  } else {
    for (std::size_t r = 0; r < rows(); ++r) z[r * w + p] *= factor;
  }
}

double KSpace::plane_max_abs(std::size_t p) const {
  const std::size_t w = cols();
  auto z = spectrum.cvalues();
  double m = 0.0;
  if (phase_axis == PhaseAxis::Rows) {
    for (std::size_t c = 0; c < w; ++c) m = std::max(m, std::abs(z[p * w + c]));
  } else {
    for (std::size_t r = 0; r < rows(); ++r) m = std::max(m, std::abs(z[r * w + p]));
  }
  return m;
}

KSpace to_kspace(const Tensor& image, PhaseAxis axis) {
  if (image.rank() != 2)
    throw ShapeError("to_kspace: expected a 2-D image, got " + shape_str(image.dims()));
  if (image.is_complex()) throw ShapeError("to_kspace: real image required");
  return KSpace{fftshift(fft2(image)), true, axis};
}

Tensor to_image(const KSpace& k) {
  const Tensor& s = k.centered ? ifftshift(k.spectrum) : k.spectrum;
  return magnitude(ifft2(s));
}

double max_spectrum_magnitude(const KSpace& k) {
  double m = 0.0;
  for (auto z : k.spectrum.cvalues()) m = std::max(m, std::abs(z));
  return m;
}

void save_kspace(const KSpace& k, const std::filesystem::path& path) {
  save_mrt1(k.spectrum, path);
  nlohmann::json meta = {{"centered", k.centered}, {"phase_axis", to_string(k.phase_axis)}};
  std::ofstream f(path.string() + ".json");
  if (!f) throw DataError("kspace: cannot write sidecar for " + path.string());
  f << meta.dump() << '\n';
}

KSpace load_kspace(const std::filesystem::path& path) {
  KSpace k;
  k.spectrum = load_mrt1(path);
  if (!k.spectrum.is_complex() || k.spectrum.rank() != 2)
    throw FormatError("kspace: " + path.string() + " is not a 2-D complex tensor");
  std::ifstream f(path.string() + ".json");
  if (!f) throw DataError("kspace: missing sidecar " + path.string() + ".json");
  try {
    auto meta = nlohmann::json::parse(f);
    k.centered = meta.at("centered").get<bool>();
    k.phase_axis = phase_axis_from_string(meta.at("phase_axis").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("kspace sidecar: " + std::string(e.what()));
  }
  return k;
}

}  // namespace mrshift
