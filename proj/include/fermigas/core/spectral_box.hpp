#pragma once

#include <fftw3.h>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "fermigas/core/error.hpp"
#include "fermigas/core/vec3.hpp"

namespace fermigas {

enum class Boundary { periodic, dirichlet };

/// Cubic box [0, L]^3 discretized with M points per dimension.
/// Periodic: x_j = j L / M, plane waves. Dirichlet: x_j = (j + 1) L / (M + 1), sine modes.
struct BoxGrid {
  double L = 1.0;
  int M = 8;
  Boundary boundary = Boundary::periodic;

  double spacing() const { return boundary == Boundary::periodic ? L / M : L / (M + 1); }
  std::size_t size() const { return static_cast<std::size_t>(M) * M * M; }
  double cell_volume() const { return std::pow(spacing(), 3); }

  double coordinate(int j) const {
    return boundary == Boundary::periodic ? j * L / M : (j + 1) * L / (M + 1);
  }
  Vec3 point(std::size_t index) const {
    const int k = static_cast<int>(index % M);
    const int j = static_cast<int>((index / M) % M);
    const int i = static_cast<int>(index / (static_cast<std::size_t>(M) * M));
    return {coordinate(i), coordinate(j), coordinate(k)};
  }
  /// Wave number along one axis for transform index j.
  double wavenumber(int j) const {
    if (boundary == Boundary::dirichlet) return std::numbers::pi * (j + 1) / L;
    const int shifted = j <= M / 2 ? j : j - M;
    return 2.0 * std::numbers::pi * shifted / L;
  }
  bool is_nyquist(int j) const { return boundary == Boundary::periodic && M % 2 == 0 && j == M / 2; }

  /// Displacement a - b, minimum image for periodic boxes.
  Vec3 displacement(const Vec3& a, const Vec3& b) const {
    Vec3 d = a - b;
    if (boundary == Boundary::periodic) {
      for (int c = 0; c < 3; ++c) d[c] -= L * std::round(d[c] / L);
    }
    return d;
  }
};

inline void validate(const BoxGrid& grid) {
  require(grid.L > 0.0, "BoxGrid: side L must be positive");
  require(grid.M >= 8, "BoxGrid: at least 8 points per dimension required");
}

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Forward/inverse spectral transforms on a BoxGrid. Plans are created once; the
/// execute calls use the new-array interface, so one instance may serve several fields.
class SpectralTransform {
 public:
  explicit SpectralTransform(const BoxGrid& grid) : grid_(grid) {
    validate(grid);
    const int m = grid.M;
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (grid.boundary == Boundary::periodic) {
      buffer_ = fftw_alloc_complex(grid.size());
      forward_ = fftw_plan_dft_3d(m, m, m, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
      backward_ = fftw_plan_dft_3d(m, m, m, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    } else {
      real_ = fftw_alloc_real(grid.size());
      forward_ = fftw_plan_r2r_3d(m, m, m, real_, real_, FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00,
                                  FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
  }
  SpectralTransform(const SpectralTransform&) = delete;
  SpectralTransform& operator=(const SpectralTransform&) = delete;
  ~SpectralTransform() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
    if (buffer_) fftw_free(buffer_);
    if (real_) fftw_free(real_);
  }

  const BoxGrid& grid() const { return grid_; }

  /// Periodic only: unnormalized forward DFT of a complex field, in place.
  void forward(std::vector<std::complex<double>>& field) const {
    fftw_execute_dft(forward_, reinterpret_cast<fftw_complex*>(field.data()),
                     reinterpret_cast<fftw_complex*>(field.data()));
  }
  /// Periodic only: inverse DFT including the 1/M^3 normalization.
  void backward(std::vector<std::complex<double>>& field) const {
    fftw_execute_dft(backward_, reinterpret_cast<fftw_complex*>(field.data()),
                     reinterpret_cast<fftw_complex*>(field.data()));
    const double scale = 1.0 / static_cast<double>(grid_.size());
    for (auto& z : field) z *= scale;
  }
  /// Dirichlet only: orthonormal DST-I in place (its own inverse).
  void sine_transform(std::vector<double>& field) const {
    fftw_execute_r2r(forward_, field.data(), field.data());
    const double scale = std::pow(2.0 * (grid_.M + 1), -1.5);
    for (auto& v : field) v *= scale;
  }

  /// Applies a radial Fourier multiplier m(|p|) to a real field.
  template <class Multiplier>
  void apply_multiplier(const double* in, double* out, const Multiplier& m) const {
    const int n = grid_.M;
    if (grid_.boundary == Boundary::periodic) {
      std::vector<std::complex<double>> f(in, in + grid_.size());
      forward(f);
      std::size_t idx = 0;
      for (int i = 0; i < n; ++i) {
        const double pi_ = grid_.wavenumber(i);
        for (int j = 0; j < n; ++j) {
          const double pj = grid_.wavenumber(j);
          for (int k = 0; k < n; ++k, ++idx) {
            const double pk = grid_.wavenumber(k);
            f[idx] *= m(std::sqrt(pi_ * pi_ + pj * pj + pk * pk));
          }
        }
      }
      backward(f);
      for (std::size_t q = 0; q < grid_.size(); ++q) out[q] = f[q].real();
    } else {
      std::vector<double> f(in, in + grid_.size());
      sine_transform(f);
      std::size_t idx = 0;
      for (int i = 0; i < n; ++i) {
        const double pi_ = grid_.wavenumber(i);
        for (int j = 0; j < n; ++j) {
          const double pj = grid_.wavenumber(j);
          for (int k = 0; k < n; ++k, ++idx) {
            const double pk = grid_.wavenumber(k);
            f[idx] *= m(std::sqrt(pi_ * pi_ + pj * pj + pk * pk));
          }
        }
      }
      sine_transform(f);
      std::copy(f.begin(), f.end(), out);
    }
  }

 private:
  BoxGrid grid_;
  fftw_complex* buffer_ = nullptr;
  double* real_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace fermigas
