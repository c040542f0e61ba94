#pragma once

// Dataset-level evaluation shared by the CLI and the acceptance suite:
// per-testbed rule scoring and the cross-testbed centroid transfer matrix.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xfermon/dataset.hpp"
#include "xfermon/diagnose.hpp"

namespace xfermon {

struct EvalOptions {
  GenOptions gen;
  int baseline_runs = 5;
  RuleConfig rules;
};

struct TestbedEval {
  std::string testbed_id;
  BaselineProfile baseline;
  std::vector<WindowSample> windows;             // raw units
  std::vector<WindowSample> normalized_windows;  // baseline units
  std::vector<Diagnosis> diagnoses;              // one per window
  ScoreReport report;
};

// Scores the rule engine on already generated rows of one testbed.
TestbedEval evaluate_rows(std::span<const DatasetRow> rows, const BaselineProfile& baseline, const RuleConfig& rules);

// Generates the testbed's labeled runs and its baseline runs, then scores.
TestbedEval evaluate_testbed(const TestbedSpec& tb, const EvalOptions& opts);

struct TransferMatrix {
  std::vector<std::string> testbeds;
  std::vector<std::vector<double>> f1;  // [train][test]

  double off_diagonal_mean() const;
};

// Nearest-centroid macro-F1 for every (train, test) pair of window sets.
TransferMatrix transfer_matrix(std::span<const std::vector<WindowSample>> windows,
                               std::span<const std::string> testbed_ids);

// Heatmap CSV with columns train,test,f1.
void write_matrix_csv(std::ostream& out, const TransferMatrix& m);

}  // namespace xfermon
