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

#include "fedliab/fl/simulator.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "fedliab/util/binary_io.h"
#include "fedliab/util/random.h"

namespace fedliab::fl {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Runs fn(i) for i in [0, count) on up to `threads` workers and rethrows the
// first failure.
template <typename Fn>
void ParallelFor(std::size_t count, std::size_t threads, Fn fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void TrainConfig::Validate() const {
  if (rounds == 0) throw std::invalid_argument("rounds must be >= 1");
  if (local_passes == 0) throw std::invalid_argument("local_passes must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("lr must be a finite non-negative number");
  }
}

nn::LayeredParams LocalTrain(const nn::Network& net, const NodeState& node,
                             const nn::LayeredParams& global, const TrainConfig& cfg,
                             std::size_t epoch, double* mean_loss) {
  if (node.dataset.empty()) {
    throw std::invalid_argument("node " + std::to_string(node.node_id) + " has no data");
  }
  cfg.Validate();
  net.CheckParams(global);
  nn::LayeredParams params = global;
  if (cfg.lr == 0.0) {
    if (mean_loss) *mean_loss = 0.0;
    return params;
  }

  const std::size_t n = node.dataset.size();
  std::vector<std::size_t> order(n);
  std::vector<Tensor> batch_inputs;
  std::vector<int> batch_labels;
  double loss_total = 0.0;
  std::size_t batches = 0;
  for (std::size_t pass = 0; pass < cfg.local_passes; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(StreamKey(cfg.master_seed, {0x10ca1, node.node_id, epoch, pass}));
    rng.Shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t end = std::min(n, start + cfg.batch_size);
      batch_inputs.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_inputs.push_back(node.dataset.images[order[k]]);
        batch_labels.push_back(node.dataset.labels[order[k]]);
      }
      auto step = nn::LossAndGrad(net, params, batch_inputs, batch_labels);
      loss_total += step.loss;
      ++batches;
      params = nn::SgdStep(params, step.grads, cfg.lr);
    }
  }
  if (mean_loss) *mean_loss = loss_total / static_cast<double>(batches);
  return params;
}

nn::LayeredParams Aggregate(std::span<const nn::LayeredParams> locals,
                            std::span<const double> weights) {
  if (locals.empty()) throw std::invalid_argument("Aggregate: no local models");
  if (weights.size() != locals.size()) {
    throw std::invalid_argument("Aggregate: weight count differs from model count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("Aggregate: weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("Aggregate: weights sum to zero");
  for (const auto& l : locals) {
    if (!l.SameShapes(locals[0])) {
      throw std::invalid_argument("Aggregate: local models differ in shape");
    }
  }

  // Anchored at the first model so identical inputs aggregate exactly to
  // themselves: out = p0 + sum_i c_i (p_i - p0).
  nn::LayeredParams out = locals[0];
  for (std::size_t i = 1; i < locals.size(); ++i) {
    const double c = weights[i] / total;
    if (c == 0.0) continue;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      auto add = [&](std::span<double> dst, std::span<const double> anchor,
                     std::span<const double> src) {
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += c * (src[j] - anchor[j]);
      };
      add(out.layers[l].weights.data(), locals[0].layers[l].weights.data(),
          locals[i].layers[l].weights.data());
      add(out.layers[l].biases.data(), locals[0].layers[l].biases.data(),
          locals[i].layers[l].biases.data());
    }
  }
  return out;
}

std::vector<double> AggregationWeights(std::span<const NodeState> nodes, Aggregation mode) {
  std::vector<double> weights;
  for (const auto& node : nodes) {
    weights.push_back(mode == Aggregation::kUniform ? 1.0
                                                    : static_cast<double>(node.dataset.size()));
  }
  return weights;
}

TrainingResult RunTraining(const nn::Network& net, const nn::LayeredParams& initial,
                           std::span<const NodeState> nodes, const TrainConfig& cfg,
                           std::span<RoundObserver* const> observers) {
  if (nodes.empty()) throw std::invalid_argument("RunTraining: no nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].node_id != i) {
      throw std::invalid_argument("node ids must be contiguous 0..N-1");
    }
  }
  cfg.Validate();
  net.CheckParams(initial);

  TrainingResult result;
  const auto weights = AggregationWeights(nodes, cfg.aggregation);
  nn::LayeredParams global = initial;
  std::vector<nn::LayeredParams> locals(nodes.size());
  std::vector<double> losses(nodes.size());

  for (std::size_t epoch = 0; epoch < cfg.rounds; ++epoch) {
    auto round_start = Clock::now();
    result.message_count += nodes.size();  // broadcast of the global model
    ParallelFor(nodes.size(), cfg.threads, [&](std::size_t n) {
      locals[n] = LocalTrain(net, nodes[n], global, cfg, epoch, &losses[n]);
    });
    result.message_count += nodes.size();  // local model uploads
    nn::LayeredParams next = Aggregate(locals, weights);
    result.train_seconds += Seconds(round_start);

    auto observe_start = Clock::now();
    RoundRecord record{epoch, &global, locals, &next};
    for (RoundObserver* observer : observers) observer->OnRound(record);
    result.observer_seconds += Seconds(observe_start);

    global = std::move(next);
    for (const auto& node : nodes) result.samples_processed += node.dataset.size() * cfg.local_passes;
    result.history.push_back(
        {epoch, nodes.size(),
         std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(nodes.size())});
  }
  result.final_params = std::move(global);
  return result;
}

EvalResult Evaluate(const nn::Network& net, const nn::LayeredParams& params,
                    const data::Dataset& ds) {
  if (ds.empty()) throw std::invalid_argument("Evaluate: empty dataset");
  EvalResult result;
  std::vector<std::size_t> correct(ds.class_count, 0);
  result.class_totals.assign(ds.class_count, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto y = static_cast<std::size_t>(ds.labels[i]);
    ++result.class_totals[y];
    if (nn::Predict(net, params, ds.images[i]) == y) {
      ++correct[y];
      ++hits;
    }
  }
  result.overall = static_cast<double>(hits) / static_cast<double>(ds.size());
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    result.per_class.push_back(result.class_totals[c] == 0
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : static_cast<double>(correct[c]) /
                                         static_cast<double>(result.class_totals[c]));
  }
  return result;
}

// --- checkpoints ------------------------------------------------------------

CheckpointWriter::CheckpointWriter(std::string directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::string CheckpointWriter::PathFor(std::size_t epoch) const {
  return (std::filesystem::path(directory_) / ("round_" + std::to_string(epoch) + ".ckpt"))
      .string();
}

void CheckpointWriter::OnRound(const RoundRecord& record) {
  std::ofstream out(PathFor(record.epoch), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + PathFor(record.epoch));
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : record.global_params->layers) {
    layers.push_back({{"weights", l.weights.shape()}, {"biases", l.biases.shape()}});
  }
  nlohmann::json header = {{"format", "fedliab-round"},
                           {"epoch", record.epoch},
                           {"nodes", record.local_params.size()},
                           {"layers", layers}};
  WriteFramedHeader(out, header.dump());
  auto write_model = [&](const nn::LayeredParams& p) {
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      WriteF64LE(out, nn::FlattenLayerParams(p, l).data());
    }
  };
  for (const auto& local : record.local_params) write_model(local);
  write_model(*record.global_params);
}

Checkpoint ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  auto header = nlohmann::json::parse(ReadFramedHeader(in));
  if (header.value("format", "") != "fedliab-round") {
    throw std::runtime_error(path + " is not a round checkpoint");
  }
  std::vector<std::pair<Shape, Shape>> shapes;
  for (const auto& l : header.at("layers")) {
    shapes.emplace_back(l.at("weights").get<Shape>(), l.at("biases").get<Shape>());
  }
  auto read_model = [&] {
    nn::LayeredParams p;
    for (const auto& [ws, bs] : shapes) {
      auto values = ReadF64LE(in, ShapeSize(ws) + ShapeSize(bs));
      p.layers.push_back(
          nn::UnflattenLayerParams(Tensor::FromVector(std::move(values)), ws, bs));
    }
    return p;
  };
  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch").get<std::size_t>();
  const auto nodes = header.at("nodes").get<std::size_t>();
  for (std::size_t n = 0; n < nodes; ++n) ckpt.local_params.push_back(read_model());
  ckpt.global_params = read_model();
  return ckpt;
}

}  // namespace fedliab::fl
