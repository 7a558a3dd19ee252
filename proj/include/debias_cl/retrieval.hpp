#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "debias_cl/encoder.hpp"
#include "debias_cl/random.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

enum class Direction : std::uint8_t { BrainToImage = 0, ImageToBrain = 1 };

inline std::string to_string(Direction d) { return d == Direction::BrainToImage ? "brain_to_image" : "image_to_brain"; }

struct RetrievalConfig {
  std::size_t n_way = 50;
  std::size_t trials = 30;
  std::uint64_t seed = 0;
  // Worker threads over trials; 0 picks hardware concurrency. The result does
  // not depend on this value.
  std::size_t threads = 1;
};

struct ReportRow {
  std::size_t step = 0;
  SessionRange range;
  Direction direction = Direction::BrainToImage;
  double top1 = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_way = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RetrievalOutcome {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// Top-1 N-way retrieval. For every (trial, query) the candidate set is the
// query's true gallery row plus n_way-1 distractors drawn without replacement
// from the other rows. Candidates are ranked by cosine similarity; ties go to
// the lowest gallery id. The distractor stream for a (trial, query) pair is
// keyed by (seed, trial, query id), and candidate positions refer to gallery
// rows sorted by id, so permuting the rows together with their ids does not
// change the result.
//
// `query_ids` and `gallery_ids` default to row indices when empty.
inline RetrievalOutcome nway_retrieval(const Tensor& queries, const Tensor& gallery, std::span<const std::size_t> truth,
                                       const RetrievalConfig& cfg, std::span<const std::uint64_t> query_ids = {},
                                       std::span<const std::uint64_t> gallery_ids = {}) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.cols() != gallery.cols()) {
    throw DimensionError("nway_retrieval: queries " + shape_string(queries.shape()) + " and gallery " +
                         shape_string(gallery.shape()) + " are incompatible");
  }
  const std::size_t q_count = queries.rows(), g_count = gallery.rows();
  if (cfg.n_way < 2 || cfg.n_way > g_count) {
    throw ConfigError("nway_retrieval: n_way " + std::to_string(cfg.n_way) + " must lie in [2, gallery size " +
                      std::to_string(g_count) + "]");
  }
  if (cfg.trials == 0) throw ConfigError("nway_retrieval: trials must be positive");
  if (truth.size() != q_count) throw DimensionError("nway_retrieval: one truth index per query required");
  for (std::size_t t : truth)
    if (t >= g_count) throw DomainError("nway_retrieval: truth index out of range");
  if (!query_ids.empty() && query_ids.size() != q_count) throw DimensionError("nway_retrieval: query id count");
  if (!gallery_ids.empty() && gallery_ids.size() != g_count) throw DimensionError("nway_retrieval: gallery id count");

  auto qid = [&](std::size_t i) { return query_ids.empty() ? static_cast<std::uint64_t>(i) : query_ids[i]; };
  auto gid = [&](std::size_t i) { return gallery_ids.empty() ? static_cast<std::uint64_t>(i) : gallery_ids[i]; };

  // Gallery rows ordered by id, and each row's rank in that order.
  std::vector<std::size_t> by_id(g_count);
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return gid(a) < gid(b); });
  std::vector<std::size_t> rank_of(g_count);
  for (std::size_t r = 0; r < g_count; ++r) rank_of[by_id[r]] = r;

  const Tensor similarity = matmul(rowwise_l2_normalize(queries), transpose(rowwise_l2_normalize(gallery)));

  auto run_trial = [&](std::size_t trial) {
    std::size_t correct = 0;
    std::vector<std::size_t> picks;  // ranks in id order, excluding the truth
    for (std::size_t q = 0; q < q_count; ++q) {
      Rng rng(derive_seed(cfg.seed, {trial, qid(q)}));
      const std::size_t truth_rank = rank_of[truth[q]];
      // Floyd's sampling of n_way-1 distinct ranks from the g_count-1 others.
      const std::size_t pool = g_count - 1, k = cfg.n_way - 1;
      picks.clear();
      for (std::size_t j = pool - k; j < pool; ++j) {
        const std::size_t v = static_cast<std::size_t>(rng.below(j + 1));
        const bool seen = std::find(picks.begin(), picks.end(), v) != picks.end();
        picks.push_back(seen ? j : v);
      }
      std::size_t best_rank = truth_rank;
      double best = similarity(q, truth[q]);
      for (std::size_t p : picks) {
        const std::size_t rank = p >= truth_rank ? p + 1 : p;
        const double s = similarity(q, by_id[rank]);
        if (s > best || (s == best && rank < best_rank)) {
          best = s;
          best_rank = rank;
        }
      }
      correct += best_rank == truth_rank ? 1 : 0;
    }
    return correct;
  };

  std::vector<std::size_t> per_trial(cfg.trials, 0);
  std::size_t workers = cfg.threads == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency()) : cfg.threads;
  workers = std::min(workers, cfg.trials);
  if (workers <= 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) per_trial[t] = run_trial(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.trials; t += workers) per_trial[t] = run_trial(t);
      });
    }
  }
  RetrievalOutcome out;
  for (std::size_t c : per_trial) out.correct += c;
  out.total = q_count * cfg.trials;
  return out;
}

// Test-split retrieval in both directions for the sessions in `range`. Brain
// queries are encoder outputs; the image side is the stored centroids. Sample
// ids are dataset indices.
inline std::vector<ReportRow> evaluate_step(const EncoderParams& params, const Dataset& ds, SessionRange range,
                                            std::size_t step, const RetrievalConfig& cfg) {
  const std::vector<std::size_t> idx = ds.select(range, Split::Test);
  if (idx.empty()) throw DomainError("evaluate_step: no test samples in sessions " + range.label());
  Tensor x = Tensor::matrix(idx.size(), ds.header.fmri_dim);
  Tensor c = Tensor::matrix(idx.size(), ds.header.embed_dim);
  std::vector<std::uint64_t> ids(idx.size());
  std::vector<std::size_t> truth(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Sample& s = ds.samples[idx[i]];
    std::copy(s.fmri.begin(), s.fmri.end(), x.row_span(i).begin());
    std::copy(s.embedding.begin(), s.embedding.end(), c.row_span(i).begin());
    ids[i] = idx[i];
    truth[i] = i;
  }
  const Tensor z = forward(params, x).output;

  std::vector<ReportRow> rows;
  for (Direction dir : {Direction::BrainToImage, Direction::ImageToBrain}) {
    const Tensor& queries = dir == Direction::BrainToImage ? z : c;
    const Tensor& gallery = dir == Direction::BrainToImage ? c : z;
    const RetrievalOutcome o = nway_retrieval(queries, gallery, truth, cfg, ids, ids);
    rows.push_back(ReportRow{step, range, dir, o.accuracy(), idx.size(), cfg.n_way, cfg.trials, cfg.seed});
  }
  return rows;
}

}  // namespace debias_cl
