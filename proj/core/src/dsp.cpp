// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdfmap/dsp.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "sdfmap/errors.hpp"

namespace sdfmap::dsp {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct Plan {
  std::size_t n = 0;
  // Radix-2 path: twiddle[k] = e^{-2pi i k / n}, k < n/2.
  cvec twiddle;
  // Bluestein path.
  std::size_t m = 0;           // convolution length, power of two >= 2n-1
  cvec chirp;                  // e^{-i pi (k^2 mod 2n) / n}
  cvec chirp_spectrum;         // FFT_m of the conjugate chirp kernel
  std::shared_ptr<const Plan> sub;  // radix-2 plan of size m
};

std::shared_ptr<const Plan> plan_for(std::size_t n);

void fft_pow2(cvec& x, const Plan& plan) {
  const std::size_t n = x.size();
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; (j & bit) != 0U; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        complexd w = plan.twiddle[k * stride];
        complexd u = x[i + k];
        complexd v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

void ifft_pow2(cvec& x, const Plan& plan) {
  for (auto& v : x) v = std::conj(v);
  fft_pow2(x, plan);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (auto& v : x) v = std::conj(v) * inv;
}

void fft_bluestein(cvec& x, const Plan& plan) {
  const std::size_t n = x.size();
  cvec a(plan.m, complexd{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * plan.chirp[k];
  fft_pow2(a, *plan.sub);
  for (std::size_t k = 0; k < plan.m; ++k) a[k] *= plan.chirp_spectrum[k];
  ifft_pow2(a, *plan.sub);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * plan.chirp[k];
}

std::shared_ptr<const Plan> make_plan(std::size_t n) {
  auto plan = std::make_shared<Plan>();
  plan->n = n;
  if (is_pow2(n)) {
    plan->twiddle.resize(std::max<std::size_t>(n / 2, 1));
    for (std::size_t k = 0; k < plan->twiddle.size(); ++k) {
      double angle = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      plan->twiddle[k] = complexd{std::cos(angle), std::sin(angle)};
    }
    return plan;
  }
  plan->m = next_pow2(2 * n - 1);
  plan->sub = plan_for(plan->m);
  plan->chirp.resize(n);
  // k^2 mod 2n keeps the chirp phase exact for large k.
  const std::int64_t two_n = 2 * static_cast<std::int64_t>(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t q = (static_cast<std::int64_t>(k) * static_cast<std::int64_t>(k)) % two_n;
    double angle = -kPi * static_cast<double>(q) / static_cast<double>(n);
    plan->chirp[k] = complexd{std::cos(angle), std::sin(angle)};
  }
  cvec b(plan->m, complexd{0.0, 0.0});
  b[0] = std::conj(plan->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b[k] = std::conj(plan->chirp[k]);
    b[plan->m - k] = std::conj(plan->chirp[k]);
  }
  fft_pow2(b, *plan->sub);
  plan->chirp_spectrum = std::move(b);
  return plan;
}

std::shared_ptr<const Plan> plan_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const Plan>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
  }
  auto plan = make_plan(n);
  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.emplace(n, std::move(plan));
  (void)inserted;
  return it->second;
}

}  // namespace

void fft_inplace(cvec& x) {
  if (x.size() <= 1) return;
  auto plan = plan_for(x.size());
  if (is_pow2(x.size()))
    fft_pow2(x, *plan);
  else
    fft_bluestein(x, *plan);
}

void ifft_inplace(cvec& x) {
  if (x.size() <= 1) return;
  for (auto& v : x) v = std::conj(v);
  fft_inplace(x);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (auto& v : x) v = std::conj(v) * inv;
}

cvec fft(cvec x) {
  fft_inplace(x);
  return x;
}

cvec ifft(cvec x) {
  ifft_inplace(x);
  return x;
}

cvec zc_sequence(int root, int length) {
  if (length < 3 || length % 2 == 0)
    throw Error("Zadoff-Chu length must be odd and at least 3, got " +
                std::to_string(length));
  if (root <= 0 || root >= length || std::gcd(root, length) != 1)
    throw InvalidRootError("Zadoff-Chu root " + std::to_string(root) +
                           " is invalid for length " + std::to_string(length));
  cvec x(static_cast<std::size_t>(length));
  const std::int64_t two_n = 2 * static_cast<std::int64_t>(length);
  for (int n = 0; n < length; ++n) {
    std::int64_t q = (static_cast<std::int64_t>(root) * n % two_n) * (n + 1) % two_n;
    double angle = -kPi * static_cast<double>(q) / static_cast<double>(length);
    x[static_cast<std::size_t>(n)] = complexd{std::cos(angle), std::sin(angle)};
  }
  return x;
}

cvec circular_correlate(const cvec& a, const cvec& b) {
  if (a.size() != b.size())
    throw LengthMismatchError("circular correlation needs equal lengths, got " +
                              std::to_string(a.size()) + " and " +
                              std::to_string(b.size()));
  cvec fa = fft(a);
  cvec fb = fft(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= std::conj(fb[k]);
  ifft_inplace(fa);
  return fa;
}

std::vector<double> design_lowpass(int taps, double cutoff) {
  if (taps < 1 || taps % 2 == 0)
    throw Error("tap count must be odd and positive, got " + std::to_string(taps));
  if (!(cutoff > 0.0) || cutoff > 0.5)
    throw Error("cutoff must lie in (0, 0.5] cycles/sample");
  std::vector<double> h(static_cast<std::size_t>(taps));
  const int center = (taps - 1) / 2;
  double sum = 0.0;
  for (int t = 0; t < taps; ++t) {
    double m = static_cast<double>(t - center);
    double sinc = m == 0.0 ? 2.0 * cutoff
                           : std::sin(2.0 * kPi * cutoff * m) / (kPi * m);
    double window =
        0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(t) /
                               static_cast<double>(taps - 1));
    h[static_cast<std::size_t>(t)] = sinc * window;
    sum += h[static_cast<std::size_t>(t)];
  }
  for (auto& v : h) v /= sum;
  return h;
}

}  // namespace sdfmap::dsp
