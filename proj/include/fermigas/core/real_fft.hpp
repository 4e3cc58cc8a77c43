#pragma once

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

#include "fermigas/core/error.hpp"
#include "fermigas/core/spectral_box.hpp"

namespace fermigas {

/// Real-to-half-complex 3D transforms on an n^3 grid. Spectrum layout n x n x (n/2 + 1).
/// forward is unnormalized; backward evaluates sum_k X_k e^{+ik.x} (also unnormalized).
class RealFFT3 {
 public:
  explicit RealFFT3(int n) : n_(n) {
    require(n >= 2 && n % 2 == 0, "RealFFT3: even size required");
    real_.resize(real_size());
    spec_.resize(spectrum_size());
    auto* sp = reinterpret_cast<fftw_complex*>(spec_.data());
    std::lock_guard lock(detail::fftw_planner_mutex());
    r2c_ = fftw_plan_dft_r2c_3d(n, n, n, real_.data(), sp, FFTW_ESTIMATE | FFTW_UNALIGNED);
    c2r_ = fftw_plan_dft_c2r_3d(n, n, n, sp, real_.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  RealFFT3(const RealFFT3&) = delete;
  RealFFT3& operator=(const RealFFT3&) = delete;
  ~RealFFT3() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(r2c_);
    fftw_destroy_plan(c2r_);
  }

  int n() const { return n_; }
  int half() const { return n_ / 2 + 1; }
  std::size_t real_size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  std::size_t spectrum_size() const { return static_cast<std::size_t>(n_) * n_ * half(); }
  /// Signed integer frequency of index i along a full axis.
  int frequency(int i) const { return i <= n_ / 2 ? i : i - n_; }

  void forward(const double* in, std::complex<double>* out) const {
    std::vector<double> scratch(in, in + real_size());
    fftw_execute_dft_r2c(r2c_, scratch.data(), reinterpret_cast<fftw_complex*>(out));
  }
  /// The input is copied, so it is left intact.
  void backward(const std::complex<double>* in, double* out) const {
    std::vector<std::complex<double>> scratch(in, in + spectrum_size());
    fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(scratch.data()), out);
  }

 private:
  int n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spec_;
  fftw_plan r2c_ = nullptr;
  fftw_plan c2r_ = nullptr;
};

}  // namespace fermigas
