// Copyright 2026 The sdfmap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal DSP kernel set used by the preamble-detection pipeline: FFT of
// arbitrary size, Zadoff-Chu sequence generation, circular correlation and
// low-pass FIR design. All math runs in double precision.

#pragma once

#include <complex>
#include <vector>

namespace sdfmap::dsp {

using complexd = std::complex<double>;
using cvec = std::vector<complexd>;

// In-place DFT, X[k] = sum_n x[n] e^{-2pi i k n / N}. Power-of-two sizes run
// the iterative radix-2 algorithm; any other size goes through Bluestein's
// chirp-z transform. Plans are cached per size and shared across threads.
void fft_inplace(cvec& x);

// In-place inverse DFT with the 1/N convention.
void ifft_inplace(cvec& x);

cvec fft(cvec x);
cvec ifft(cvec x);

// Zadoff-Chu root sequence x_u(n) = e^{-i pi u n (n+1) / length} for odd
// length. The phase accumulator runs modulo 2*length in exact integer
// arithmetic. Throws InvalidRootError unless 0 < root < length and
// gcd(root, length) == 1.
cvec zc_sequence(int root, int length);

// Circular correlation c[l] = sum_m a[m + l mod N] * conj(b[m]), computed as
// IDFT(FFT(a) . conj(FFT(b))). If a is b delayed by d, the peak lands at
// index d. Throws LengthMismatchError when sizes differ.
cvec circular_correlate(const cvec& a, const cvec& b);

// Hamming windowed-sinc low-pass. cutoff is in cycles per sample, in
// (0, 0.5]. Taps are normalized to unit DC gain and symmetric, so the
// filter is zero-phase when applied around its center tap.
std::vector<double> design_lowpass(int taps, double cutoff);

}  // namespace sdfmap::dsp
