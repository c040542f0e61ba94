#include "xfermon/evaluate.hpp"

#include <ostream>

#include "xfermon/error.hpp"

namespace xfermon {

TestbedEval evaluate_rows(std::span<const DatasetRow> rows, const BaselineProfile& baseline, const RuleConfig& rules) {
  TestbedEval ev;
  ev.testbed_id = baseline.testbed_id;
  ev.baseline = baseline;
  ev.windows = make_windows(rows, rules.window_s);
  ev.normalized_windows = make_windows(normalize(rows, baseline), rules.window_s);
  ev.diagnoses = diagnose_rows(rows, baseline, rules);
  std::vector<AnomalyClass> pred, truth;
  for (std::size_t i = 0; i < ev.windows.size(); ++i) {
    pred.push_back(ev.diagnoses[i].label);
    truth.push_back(ev.windows[i].label);
  }
  ev.report = score(pred, truth);
  return ev;
}

TestbedEval evaluate_testbed(const TestbedSpec& tb, const EvalOptions& opts) {
  const auto rows = generate_dataset({tb}, opts.gen);
  const auto normal = generate_normal_runs(tb, opts.baseline_runs, opts.gen);
  return evaluate_rows(rows, fit_baseline(normal, tb), opts.rules);
}

double TransferMatrix::off_diagonal_mean() const {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t a = 0; a < f1.size(); ++a)
    for (std::size_t b = 0; b < f1[a].size(); ++b)
      if (a != b) {
        sum += f1[a][b];
        ++n;
      }
  return n ? sum / static_cast<double>(n) : 0;
}

TransferMatrix transfer_matrix(std::span<const std::vector<WindowSample>> windows,
                               std::span<const std::string> testbed_ids) {
  if (windows.size() != testbed_ids.size()) throw DomainError("one window set per testbed");
  TransferMatrix m;
  m.testbeds.assign(testbed_ids.begin(), testbed_ids.end());
  for (const auto& train : windows) {
    std::vector<LabeledVector> fit;
    for (const auto& w : train) fit.push_back({w.mean, w.label});
    const auto model = centroid_fit(fit);
    auto& row = m.f1.emplace_back();
    for (const auto& test : windows) {
      std::vector<AnomalyClass> pred, truth;
      for (const auto& w : test) {
        pred.push_back(centroid_predict(model, w.mean));
        truth.push_back(w.label);
      }
      row.push_back(score(pred, truth).macro_f1);
    }
  }
  return m;
}

void write_matrix_csv(std::ostream& out, const TransferMatrix& m) {
  out << "train,test,f1\n";
  for (std::size_t a = 0; a < m.f1.size(); ++a)
    for (std::size_t b = 0; b < m.f1[a].size(); ++b)
      out << m.testbeds[a] << ',' << m.testbeds[b] << ',' << m.f1[a][b] << '\n';
}

}  // namespace xfermon
