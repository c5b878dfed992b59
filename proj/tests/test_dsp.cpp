/*
 * Copyright 2026 The sdfmap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cmath>
#include <random>

#include "sdfmap/dsp.hpp"
#include "sdfmap/errors.hpp"

using namespace sdfmap;
using dsp::complexd;
using dsp::cvec;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Quadratic-time reference transform, written independently of the library
// implementation.
cvec dft_reference(const cvec& x, bool inverse) {
    const std::size_t n = x.size();
    cvec out(n, complexd{0.0, 0.0});
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        complexd acc{0.0, 0.0};
        for (std::size_t m = 0; m < n; ++m) {
            double angle = sign * 2.0 * kPi * static_cast<double>(k * m % n) /
                           static_cast<double>(n);
            acc += x[m] * complexd{std::cos(angle), std::sin(angle)};
        }
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

cvec random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    cvec x(n);
    for (auto& v : x) v = complexd{dist(rng), dist(rng)};
    return x;
}

double rel_error(const cvec& got, const cvec& want) {
    double num = 0.0;
    double den = 0.0;
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += std::norm(got[i] - want[i]);
        den += std::norm(want[i]);
    }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace

TEST_CASE("fft matches the quadratic reference on mixed sizes") {
    for (std::size_t n : {std::size_t{4}, std::size_t{8}, std::size_t{11},
                          std::size_t{64}, std::size_t{139}, std::size_t{256},
                          std::size_t{1112}}) {
        cvec x = random_vector(n, 0x5eed0000 + n);
        CHECK(rel_error(dsp::fft(x), dft_reference(x, false)) < 1e-9);
        CHECK(rel_error(dsp::ifft(x), dft_reference(x, true)) < 1e-9);
    }
}

TEST_CASE("ifft inverts fft to machine precision") {
    for (std::size_t n : {std::size_t{11}, std::size_t{139}, std::size_t{128}}) {
        cvec x = random_vector(n, 0xab5e0000 + n);
        CHECK(rel_error(dsp::ifft(dsp::fft(x)), x) < 1e-12);
    }
}

TEST_CASE("transform energy obeys Parseval's identity") {
    cvec x = random_vector(139, 0x9a7e11);
    cvec spectrum = dsp::fft(x);
    double time_energy = 0.0;
    double freq_energy = 0.0;
    for (const auto& v : x) time_energy += std::norm(v);
    for (const auto& v : spectrum) freq_energy += std::norm(v);
    CHECK(freq_energy / static_cast<double>(x.size()) ==
          doctest::Approx(time_energy).epsilon(1e-12));
}

TEST_CASE("impulse and constant inputs transform to known spectra") {
    cvec impulse(139, complexd{0.0, 0.0});
    impulse[0] = complexd{1.0, 0.0};
    for (const auto& v : dsp::fft(impulse)) {
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }

    cvec ones(64, complexd{1.0, 0.0});
    cvec spectrum = dsp::fft(ones);
    CHECK(spectrum[0].real() == doctest::Approx(64.0));
    for (std::size_t k = 1; k < spectrum.size(); ++k)
        CHECK(std::abs(spectrum[k]) < 1e-10);
}

TEST_CASE("zadoff-chu sequences are unit modulus with delta autocorrelation") {
    for (int n_zc : {11, 139}) {
        for (int u : {1, 2, 5}) {
            cvec z = dsp::zc_sequence(u, n_zc);
            REQUIRE(static_cast<int>(z.size()) == n_zc);
            CHECK(std::abs(z[0] - complexd{1.0, 0.0}) < 1e-12);
            for (const auto& v : z) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);

            cvec ac = dsp::circular_correlate(z, z);
            CHECK(std::abs(ac[0].real() - n_zc) < 1e-9 * n_zc);
            for (std::size_t l = 1; l < ac.size(); ++l)
                CHECK(std::abs(ac[l]) < 1e-9 * n_zc);
        }
    }
}

TEST_CASE("distinct prime-length roots cross-correlate flat at sqrt of length") {
    for (int n_zc : {11, 139}) {
        const double want = std::sqrt(static_cast<double>(n_zc));
        for (auto [u, v] : {std::pair{1, 2}, std::pair{5, 7}}) {
            cvec a = dsp::zc_sequence(u, n_zc);
            cvec b = dsp::zc_sequence(v, n_zc);
            cvec cc = dsp::circular_correlate(a, b);
            for (const auto& c : cc)
                CHECK(std::abs(std::abs(c) - want) < 1e-9 * want);
        }
    }
}

TEST_CASE("a delayed sequence correlates to a peak at the delay") {
    const int n = 139;
    const int delay = 17;
    cvec z = dsp::zc_sequence(3, n);
    cvec delayed(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        delayed[(i + delay) % z.size()] = z[i];
    cvec cc = dsp::circular_correlate(delayed, z);
    std::size_t best = 0;
    for (std::size_t l = 1; l < cc.size(); ++l)
        if (std::abs(cc[l]) > std::abs(cc[best])) best = l;
    CHECK(best == static_cast<std::size_t>(delay));
    CHECK(std::abs(cc[best].real() - n) < 1e-9 * n);
}

TEST_CASE("invalid zadoff-chu parameters are rejected") {
    CHECK_THROWS_AS(dsp::zc_sequence(0, 139), InvalidRootError);
    CHECK_THROWS_AS(dsp::zc_sequence(139, 139), InvalidRootError);
    CHECK_THROWS_AS(dsp::zc_sequence(-3, 139), InvalidRootError);
    CHECK_THROWS_AS(dsp::zc_sequence(3, 9), InvalidRootError);  // gcd(3, 9) = 3
    CHECK_THROWS_AS(dsp::zc_sequence(1, 10), Error);            // even length
}

TEST_CASE("correlation demands equal lengths") {
    cvec a(10);
    cvec b(11);
    CHECK_THROWS_AS(dsp::circular_correlate(a, b), LengthMismatchError);
}

TEST_CASE("low-pass design is symmetric with unit DC gain") {
    auto h = dsp::design_lowpass(63, 1.0 / 16.0);
    REQUIRE(h.size() == 63);
    double sum = 0.0;
    for (double v : h) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t t = 0; t < h.size(); ++t)
        CHECK(h[t] == doctest::Approx(h[h.size() - 1 - t]).epsilon(1e-12));

    // Stopband rejection, measured against the DTFT evaluated directly.
    auto response = [&](double f) {
        complexd acc{0.0, 0.0};
        for (std::size_t t = 0; t < h.size(); ++t) {
            double angle = -2.0 * kPi * f * static_cast<double>(t);
            acc += h[t] * complexd{std::cos(angle), std::sin(angle)};
        }
        return std::abs(acc);
    };
    CHECK(response(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(response(0.25) < 1e-3);
    CHECK(response(0.4) < 1e-3);

    CHECK_THROWS_AS(dsp::design_lowpass(64, 0.1), Error);  // even tap count
    CHECK_THROWS_AS(dsp::design_lowpass(63, 0.6), Error);  // cutoff too high
}
