// Minimal use of the library without the harness: train the MNIST network
// with Tangma on synthetic blobs for one epoch and print alpha/gamma.

#include <cstdio>
#include <random>

#include "tangma/adam.hpp"
#include "tangma/data.hpp"
#include "tangma/loss.hpp"
#include "tangma/model.hpp"

int main() {
  using namespace tangma;
  const Dataset data = synthetic_dataset(512, 1);
  auto model = build_model<float>(ModelSpec{Architecture::Mnist, ActivationKind::Tangma});
  Adam<float> adam(model.parameters());
  std::mt19937_64 rng(1);

  const auto plan = batches(data, 64, true, 1, 1);
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const Batch batch = plan[b];
    adam.zero_grad();
    const auto loss = cross_entropy(model.forward(batch.images, Mode::Train, rng), batch.labels);
    backward(loss);
    adam.step();
    const auto& p = model.tangma_params().front();
    std::printf("batch %zu  loss %.4f  alpha %+.5f  gamma %+.5f\n", b + 1, loss.value().item(), p.alpha_value(),
                p.gamma_value());
  }
}
