// Minimal end-to-end use of the library: simulate a spiked dataset, run the
// test against a small Tracy-Widom table, and bootstrap the leading gap.

#include "subcrit/subcrit.hpp"

#include <iostream>

int main() {
    using namespace subcrit;

    Scenario s;
    s.n = 300;
    s.p = 200;
    s.leading = {3.0, 1.0};
    const auto eigs = population_eigenvalues(s);
    const DataMatrix data(scenario_data(s, eigs, 0));

    // a small table keeps the example fast; real use wants the defaults
    TwTableKey key;
    key.goe_n = 400;
    key.reps = 2000;
    key.d = 4;
    const TwTable table = build_table(key);

    const TestReport report = run_test(data, table);
    std::cout << format_report(report);

    const EigenReport er = spectrum(data);
    const TruncatedSpectrum trunc = bootstrap_population(er, 0.2);
    const BootstrapRun run = run_bootstrap(trunc, er.n, 200, Functional::top2(), 7);
    const NormalizedSamples ns = normalized_samples(run);
    std::cout << "bootstrap G* mean " << mean_of(ns.G) << ", 0.95-quantile " << bootstrap_quantile(ns.G, 0.95) << "\n";
}
