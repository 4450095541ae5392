// Copyright 2026 The fedliab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#ifndef FEDLIAB_HARNESS_EXPORT_H_
#define FEDLIAB_HARNESS_EXPORT_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedliab/fl/simulator.h"
#include "fedliab/harness/config.h"
#include "fedliab/harness/experiment.h"

namespace fedliab::harness {

// scenario,class,accuracy with one "all" row per scenario, then one row per
// class ("nan" for classes missing from the test set).
void WriteAccuracyCsv(std::ostream& out,
                      const std::vector<std::pair<std::string, const fl::EvalResult*>>& rows);

// Writes into `dir` (created if needed):
//   manifest.json   resolved config; `fedliab run --config manifest.json`
//                   reproduces every file below except overhead.json
//   accuracy.csv    test accuracy; audited_retrain also lists the audited run
//   scores.csv      normalized radist, cosine and reputation traces
//   audit.json      the audit report (for audited_retrain: the one that chose
//                   the exclusions)
//   distances.csv / distances.bin, model.bin, partition.json
//   overhead.json   only when `overhead` is given
// audited_retrain additionally exports its audited run under audited_run/.
// Throws std::runtime_error when the directory cannot be written.
void ExportMetrics(const ScenarioResult& result, const ExperimentConfig& cfg,
                   const ExperimentData& data, const OverheadReport* overhead,
                   const std::filesystem::path& dir);

// The files whose bytes must not change between runs of the same manifest.
inline const std::vector<std::string>& DeterministicOutputs() {
  static const std::vector<std::string> files = {"accuracy.csv", "scores.csv", "audit.json"};
  return files;
}

}  // namespace fedliab::harness

#endif  // FEDLIAB_HARNESS_EXPORT_H_
