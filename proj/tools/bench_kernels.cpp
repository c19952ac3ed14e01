// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0
//
// Timing comparison between the serial reference kernels and the OpenMP
// variants, with a bitwise-equality check on every output (both variants
// accumulate in the same order, so any difference is a bug).

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "flexvox/kernels.hpp"
#include "flexvox/prng.hpp"

namespace {

using namespace flexvox;
namespace k = flexvox::kernels;
using Clock = std::chrono::steady_clock;

std::vector<float> random_buf(size_t n, uint64_t seed) {
  Prng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

double time_best_ms(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  return best;
}

int failures = 0;

void report(const std::string& label, double serial_ms, double omp_ms, bool equal) {
  std::printf("%-34s  serial %9.2f ms   omp %9.2f ms   speedup %5.2fx   %s\n", label.c_str(),
              serial_ms, omp_ms, serial_ms / omp_ms, equal ? "bitwise-equal" : "MISMATCH");
  if (!equal) ++failures;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void bench_conv(const char* what, const k::Conv3dGeom& g, int reps) {
  const size_t in_n = static_cast<size_t>(g.batch * g.cin * g.in_d * g.in_h * g.in_w);
  const size_t w_n = static_cast<size_t>(g.cout * g.cin * g.k * g.k * g.k);
  const size_t out_n = static_cast<size_t>(g.batch * g.cout * g.out_d() * g.out_h() * g.out_w());
  const std::vector<float> x = random_buf(in_n, 11), w = random_buf(w_n, 12),
                           gy = random_buf(out_n, 13);
  std::vector<float> a, b;
  char label[128];
  const std::string name = what;

  if (name == "fwd") {
    a.assign(out_n, 0.0f);
    b.assign(out_n, 0.0f);
    const double ts = time_best_ms([&] { k::conv3d_fwd_serial(x.data(), w.data(), a.data(), g); }, reps);
    const double tp = time_best_ms([&] { k::conv3d_fwd_omp(x.data(), w.data(), b.data(), g); }, reps);
    std::snprintf(label, sizeof(label), "conv3d_fwd %" PRId64 "c->%" PRId64 "c %" PRId64 "^3 s%" PRId64,
                  g.cin, g.cout, g.in_d, g.stride);
    report(label, ts, tp, same_bits(a, b));
  } else if (name == "dx") {
    a.assign(in_n, 0.0f);
    b.assign(in_n, 0.0f);
    const double ts = time_best_ms([&] { k::conv3d_dx_serial(gy.data(), w.data(), a.data(), g); }, reps);
    const double tp = time_best_ms([&] { k::conv3d_dx_omp(gy.data(), w.data(), b.data(), g); }, reps);
    std::snprintf(label, sizeof(label), "conv3d_dx  %" PRId64 "c->%" PRId64 "c %" PRId64 "^3 s%" PRId64,
                  g.cin, g.cout, g.in_d, g.stride);
    report(label, ts, tp, same_bits(a, b));
  } else {
    a.assign(w_n, 0.0f);
    b.assign(w_n, 0.0f);
    const double ts = time_best_ms([&] { k::conv3d_dw_serial(x.data(), gy.data(), a.data(), g); }, reps);
    const double tp = time_best_ms([&] { k::conv3d_dw_omp(x.data(), gy.data(), b.data(), g); }, reps);
    std::snprintf(label, sizeof(label), "conv3d_dw  %" PRId64 "c->%" PRId64 "c %" PRId64 "^3 s%" PRId64,
                  g.cin, g.cout, g.in_d, g.stride);
    report(label, ts, tp, same_bits(a, b));
  }
}

void bench_pool(int64_t bc, int64_t d, int reps) {
  const size_t in_n = static_cast<size_t>(bc * d * d * d);
  const size_t out_n = in_n / 8;
  const std::vector<float> x = random_buf(in_n, 21), gy = random_buf(out_n, 22);
  std::vector<float> ya(out_n), yb(out_n), gxa(in_n), gxb(in_n);
  std::vector<int32_t> ia(out_n), ib(out_n);
  char label[128];

  double ts = time_best_ms([&] { k::maxpool2_fwd_serial(x.data(), ya.data(), ia.data(), bc, d, d, d); }, reps);
  double tp = time_best_ms([&] { k::maxpool2_fwd_omp(x.data(), yb.data(), ib.data(), bc, d, d, d); }, reps);
  std::snprintf(label, sizeof(label), "maxpool2_fwd %" PRId64 "x%" PRId64 "^3", bc, d);
  report(label, ts, tp,
         same_bits(ya, yb) && std::memcmp(ia.data(), ib.data(), out_n * sizeof(int32_t)) == 0);

  ts = time_best_ms([&] { k::maxpool2_bwd_serial(gy.data(), ia.data(), gxa.data(), bc, d, d, d); }, reps);
  tp = time_best_ms([&] { k::maxpool2_bwd_omp(gy.data(), ib.data(), gxb.data(), bc, d, d, d); }, reps);
  std::snprintf(label, sizeof(label), "maxpool2_bwd %" PRId64 "x%" PRId64 "^3", bc, d);
  report(label, ts, tp, same_bits(gxa, gxb));
}

void bench_gemm(int64_t m, int64_t kk, int64_t n, int reps) {
  const std::vector<float> a = random_buf(static_cast<size_t>(m * kk), 31),
                           b = random_buf(static_cast<size_t>(kk * n), 32);
  std::vector<float> ca(static_cast<size_t>(m * n)), cb(static_cast<size_t>(m * n));
  char label[128];

  double ts = time_best_ms([&] { k::gemm_nn_serial(a.data(), b.data(), ca.data(), m, kk, n); }, reps);
  double tp = time_best_ms([&] { k::gemm_nn_omp(a.data(), b.data(), cb.data(), m, kk, n); }, reps);
  std::snprintf(label, sizeof(label), "gemm_nn %" PRId64 "x%" PRId64 "x%" PRId64, m, kk, n);
  report(label, ts, tp, same_bits(ca, cb));

  ts = time_best_ms([&] { k::gemm_nt_serial(a.data(), b.data(), ca.data(), m, kk, n); }, reps);
  tp = time_best_ms([&] { k::gemm_nt_omp(a.data(), b.data(), cb.data(), m, kk, n); }, reps);
  std::snprintf(label, sizeof(label), "gemm_nt %" PRId64 "x%" PRId64 "x%" PRId64, m, kk, n);
  report(label, ts, tp, same_bits(ca, cb));

  ts = time_best_ms([&] { k::gemm_tn_serial(a.data(), b.data(), ca.data(), m, kk, n); }, reps);
  tp = time_best_ms([&] { k::gemm_tn_omp(a.data(), b.data(), cb.data(), m, kk, n); }, reps);
  std::snprintf(label, sizeof(label), "gemm_tn %" PRId64 "x%" PRId64 "x%" PRId64, m, kk, n);
  report(label, ts, tp, same_bits(ca, cb));
}

}  // namespace

int main(int argc, char** argv) {
  const bool full = argc > 1 && std::string(argv[1]) == "--full";
  const int reps = full ? 5 : 3;
  std::printf("OpenMP max threads: %d\n\n", omp_get_max_threads());

  // Encoder-style same-size convolution and the critic's strided variant.
  k::Conv3dGeom enc;
  enc.batch = 1;
  enc.cin = 8;
  enc.cout = 16;
  enc.in_d = enc.in_h = enc.in_w = full ? 32 : 16;
  enc.k = 4;
  enc.stride = 1;
  enc.pad_lo = 1;
  enc.pad_hi = 2;
  bench_conv("fwd", enc, reps);
  bench_conv("dx", enc, reps);
  bench_conv("dw", enc, reps);

  k::Conv3dGeom critic = enc;
  critic.stride = 2;
  critic.pad_lo = 1;
  critic.pad_hi = 1;
  bench_conv("fwd", critic, reps);

  bench_pool(full ? 64 : 16, full ? 32 : 16, reps);
  bench_gemm(full ? 512 : 128, full ? 512 : 256, full ? 512 : 128, reps);

  std::printf("\n%s\n", failures == 0 ? "all outputs bitwise equal"
                                      : "BITWISE MISMATCHES DETECTED");
  return failures == 0 ? 0 : 1;
}
