#pragma once

#include <filesystem>
#include <string>

#include "mrshift/tensor.hpp"

namespace mrshift {

enum class PhaseAxis { Rows, Cols };

std::string to_string(PhaseAxis axis);
PhaseAxis phase_axis_from_string(const std::string& s);

// Complex spectrum of one image slice. When `centered` is set, DC sits at
// (floor(H/2), floor(W/2)). The phase axis names the dimension whose planes
// are acquired line by line: Rows means a "plane" is one row of the spectrum.
struct KSpace {
  Tensor spectrum;
  bool centered = true;
  PhaseAxis phase_axis = PhaseAxis::Rows;

  std::size_t rows() const { return spectrum.dim(0); }
  std::size_t cols() const { return spectrum.dim(1); }
  // Number of phase-encoding planes and the index of the DC plane.
  std::size_t num_planes() const;
  std::size_t dc_plane() const;

  // Multiplies every bin of phase plane `p` by `factor`.
  void scale_plane(std::size_t p, double factor);
  double plane_max_abs(std::size_t p) const;
};

// Centered spectrum of a real image.
KSpace to_kspace(const Tensor& image, PhaseAxis axis = PhaseAxis::Rows);

// magnitude(ifft2(uncentered spectrum)).
Tensor to_image(const KSpace& k);

double max_spectrum_magnitude(const KSpace& k);

// MRT1 complex payload at `path`, plus `<path>.json` holding
// {"centered": bool, "phase_axis": "rows"|"cols"} on one line.
void save_kspace(const KSpace& k, const std::filesystem::path& path);
KSpace load_kspace(const std::filesystem::path& path);

}  // namespace mrshift
