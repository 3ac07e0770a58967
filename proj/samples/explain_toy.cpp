// Explains two rows of the bundled toy table with both the approximate and the
// exact method and prints the Shapley values side by side.

#include <cstdio>
#include <string>

#include "coalesce/coalesce.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : COALESCE_SAMPLES_DIR;
  coalesce::TableHints hints;
  hints.prediction_column = "prediction";
  auto table = coalesce::load_table(dir + "/toy_train.csv", hints);
  const auto rows = coalesce::load_rows(dir + "/toy_explain.csv", table.schema);

  const auto data = coalesce::DesignArtifacts::build(table.schema, table.rows, *table.predictions);
  const auto plan = coalesce::enumerate_all(data.p());

  coalesce::ApproxSettings settings;
  settings.kappa_multiplier = 1e6;
  const auto approx = coalesce::explain_approx(data, plan, rows, settings);
  const auto exact = coalesce::explain_exact_batch(data, plan, rows);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::printf("row %zu  base %.4f (exact %.4f)\n", r, approx.results[r]->phi0, exact.results[r]->phi0);
    for (int i = 0; i < data.p(); ++i) {
      std::printf("  %-8s approx %+.6f  exact %+.6f\n", data.schema.features[static_cast<std::size_t>(i)].name.c_str(),
                  approx.results[r]->phi[i], exact.results[r]->phi[i]);
    }
  }
  return 0;
}
