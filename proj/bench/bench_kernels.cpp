// Timings of the batch kernels against their serial reference paths. The
// parallel results are bit-identical by construction; this binary only
// reports wall-clock speedups.

#include <chrono>
#include <cstdio>
#include <functional>

#include "flowlab/finite_diff.hpp"
#include "flowlab/moments.hpp"
#include "flowlab/trainer.hpp"

using namespace flowlab;
using par::Exec;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s);
}

}  // namespace

int main() {
  std::printf("flowlab kernel benchmark (%d worker threads)\n", par::max_threads());

  ModelConfig cfg;
  cfg.variant = ModelConfig::Variant::NvpExp;
  cfg.input_shape = {4, 4, 4};
  cfg.couplings = 4;
  cfg.hidden = 24;
  Rng rng(1);
  FlowModel model = build_model(cfg, rng);
  {
    std::vector<double> p;
    model.gather_params(p);
    for (double& v : p) v += 0.1 * rng.normal();
    model.scatter_params(p);
  }
  const Prior prior = Prior::gaussian(1.0);

  Tensor batch({512, 4, 4, 4});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.normal();

  report("batch log-likelihood",
         time_best_of(3, [&] { log_likelihood(model, prior, batch, Exec::Serial); }),
         time_best_of(3, [&] { log_likelihood(model, prior, batch, Exec::Parallel); }));

  Tensor grad_batch({128, 4, 4, 4});
  for (std::size_t i = 0; i < grad_batch.size(); ++i) grad_batch[i] = rng.normal();
  report("loss_and_grad (batch 128)",
         time_best_of(3, [&] { loss_and_grad(model, prior, grad_batch, 0.01, Exec::Serial); }),
         time_best_of(3, [&] { loss_and_grad(model, prior, grad_batch, 0.01, Exec::Parallel); }));

  Tensor wide({2048, 512});
  for (std::size_t i = 0; i < wide.size(); ++i) wide[i] = rng.normal();
  report("compute_moments (2048x512)",
         time_best_of(3, [&] { compute_moments(wide, Exec::Serial); }),
         time_best_of(3, [&] { compute_moments(wide, Exec::Parallel); }));

  const VectorFn fwd = [&](const std::vector<double>& v) {
    std::vector<double> z(model.dim());
    double ld = 0.0;
    model.forward_one(v.data(), z.data(), ld, nullptr);
    return z;
  };
  std::vector<double> x0(model.dim());
  for (double& v : x0) v = rng.normal();
  report("finite-difference Jacobian",
         time_best_of(3, [&] { finite_diff_jacobian(fwd, x0, 1e-5, Exec::Serial); }),
         time_best_of(3, [&] { finite_diff_jacobian(fwd, x0, 1e-5, Exec::Parallel); }));

  return 0;
}
