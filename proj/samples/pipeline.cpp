// Builds one synthetic program, extracts its ACFG under setting 10 and scores every
// indirect callsite with a freshly initialized (untrained) model.
#include <iostream>

#include "neucall/neucall.hpp"

int main() {
  using namespace neucall;
  auto corpus = generate_synthetic_corpus(1, 7);
  const auto& prog = corpus.front();

  TrainConfig tc;
  tc.hidden = 32;
  tc.embed_dim = 16;
  const auto config = feature_setting(10);
  const auto shape = model_shape(config, tc);
  const auto p = prepare_program(prog.ir, prog.labels, extract_options(config, tc), shape);
  std::cout << format_counts(p.ex.acfg);

  const auto params = ModelParams<float>::init(shape, hyperparameters(tc));
  for (const auto& site : predict_program(p, params)) {
    std::cout << "icall " << hex(site.call_address) << ": top candidate " << hex(site.candidates.front().address)
              << " p=" << site.candidates.front().probability << "\n";
  }
}
