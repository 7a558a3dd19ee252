// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "debias_cl/debias_cl.hpp"

using namespace debias_cl;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Verdict()>& body, double budget_seconds = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_seconds > 0.0 && seconds >= budget_seconds) {
    v.require(false, "runtime " + std::to_string(seconds) + " s exceeds " + std::to_string(budget_seconds) + " s");
  }
  if (!v.pass) ++failures;
  std::printf("%s criterion %d: %s (%.1f s)%s%s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), seconds,
              v.detail.empty() ? "" : " -- ", v.detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// Independent loop form of the de-biased contrastive loss, centroids as anchors.
double scalar_dcl(const Tensor& z, const Tensor& c, const std::vector<double>& w, double tau) {
  const std::size_t b = z.rows(), d = z.cols();
  auto cosine = [&](const Tensor& u, std::size_t i, const Tensor& v, std::size_t j) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t k = 0; k < d; ++k) {
      uv += u(i, k) * v(j, k);
      uu += u(i, k) * u(i, k);
      vv += v(j, k) * v(j, k);
    }
    return uv / std::sqrt(uu * vv);
  };
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> s(b);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, s[j] = cosine(c, i, z, j) / tau);
    double denom = 0;
    for (double x : s) denom += std::exp(x - mx);
    total += w[i] * -(s[i] - mx - std::log(denom));
  }
  return total / static_cast<double>(b);
}

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

struct MethodSpec {
  const char* label;
  Experiment experiment;
};

constexpr MethodSpec kMethods[] = {{"W/o CL", Experiment::WithoutCL},
                                   {"DCL+L2", Experiment::Exp3DclL2},
                                   {"DCL+AFM", Experiment::Exp6Ours}};
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

// Report CSVs of every (method, seed) run of the forgetting experiment.
std::vector<std::string> forgetting_runs(const Dataset& ds) {
  std::vector<std::string> csvs;
  for (const MethodSpec& m : kMethods) {
    for (std::uint64_t seed : kSeeds) {
      RunSpec spec = default_run_spec(Preset::Desk);
      apply_experiment(spec, m.experiment);
      apply_seed(spec, seed);
      spec.encoder.input_dim = ds.header.fmri_dim;
      spec.encoder.output_dim = ds.header.embed_dim;
      spec.protocol = Protocol{20, 10, ds.header.sessions};
      csvs.push_back(report_csv(run_protocol(ds, spec.protocol, spec.encoder, spec.train, spec.retrieval).report_rows()));
    }
  }
  return csvs;
}

}  // namespace

int main() {
  const Dataset reference = generate(GenConfig{});

  criterion(1, "gradient suite, max relative error < 1e-5 over 20 instances per case", [] {
    Verdict v;
    double worst = 0.0;
    for (const GradSuiteCase& c : run_grad_suite(20)) {
      v.require(c.instances == 20, c.name + " ran " + std::to_string(c.instances) + " instances");
      v.require(c.max_relative_error < 1e-5, c.name + " error " + num(c.max_relative_error));
      worst = std::max(worst, c.max_relative_error);
    }
    if (v.pass) v.detail = "max " + num(worst);
    return v;
  }, 30.0);

  criterion(2, "closed-form loss values", [] {
    Verdict v;
    v.require(bias_weight_from_rate(1.0) == 1.0, "bias_weight(1) != 1");
    v.require(std::abs(bias_weight_from_rate(0.75) - std::exp(0.25)) <= 1e-12, "bias_weight(0.75)");
    Rng rng(7);
    const Tensor z = random_matrix(rng, 8, 6), other = random_matrix(rng, 8, 6);
    v.require(std::abs(afm_distance(z, z).item()) <= 1e-12, "AFM(z,z)");
    v.require(std::abs(afm_distance(z, scale(z, -1.0)).item() - 4.0) <= 1e-12, "AFM(z,-z)");
    v.require(std::abs(afm_distance(z, other).item() - afm_distance(scale(z, 3.0), scale(other, 0.2)).item()) <= 1e-12,
              "AFM scale invariance");
    const std::vector<double> ones(8, 1.0);
    const Tensor logits = scale(matmul(rowwise_l2_normalize(other), transpose(rowwise_l2_normalize(z))), 10.0);
    const double info_nce = -mean(diagonal(log_softmax_rows(logits))).item();
    v.require(std::abs(dcl_loss(z, other, ones, 0.1).item() - info_nce) <= 1e-12, "DCL(w=1) != InfoNCE");
    ForwardTrace<Tensor> prev, cur;
    prev.intermediates = {Tensor::matrix({{0.0}}), Tensor::matrix({{0.0}}), Tensor::matrix({{0.0}})};
    cur.intermediates = {Tensor::matrix({{0.0}}), Tensor::matrix({{1.0}}), Tensor::matrix({{2.0}})};
    v.require(std::abs(cl_loss(prev, cur, DistillKind::L2).item() - 5.0 / 3.0) <= 1e-12, "cl_loss mean of (0,1,4)");
    return v;
  });

  criterion(3, "dcl_loss equals a scalar-loop oracle on 50 random batches", [] {
    Verdict v;
    Rng rng(33);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const std::size_t b = 2 + rng.below(7), d = 1 + rng.below(16);
      const Tensor z = random_matrix(rng, b, d), c = random_matrix(rng, b, d);
      std::vector<double> w(b);
      for (double& x : w) x = bias_weight_from_rate(rng.uniform());
      const double tau = rng.uniform(0.05, 1.0);
      worst = std::max(worst, std::abs(dcl_loss(z, c, w, tau).item() - scalar_dcl(z, c, w, tau)));
    }
    v.require(worst <= 1e-10, "max difference " + num(worst));
    if (v.pass) v.detail = "max difference " + num(worst);
    return v;
  });

  criterion(4, "protocol step counts (15,5)=6 (20,10)=3 (20,2)=11 (20,5)=5", [] {
    Verdict v;
    const std::pair<Protocol, std::size_t> cases[] = {
        {{15, 5, 40}, 6}, {{20, 10, 40}, 3}, {{20, 2, 40}, 11}, {{20, 5, 40}, 5}};
    for (const auto& [p, steps] : cases) {
      const StepPlan plan = plan_steps(p);
      v.require(plan.size() == steps, p.label() + " gave " + std::to_string(plan.size()));
      v.require(plan.back().train.last == 40 && plan.back().evaluation == SessionRange{1, 40}, p.label() + " coverage");
    }
    return v;
  });

  criterion(5, "retrieval calibration (chance, perfect, determinism)", [] {
    Verdict v;
    const Tensor q = embedding_provider(101, 200, 16), g = embedding_provider(202, 200, 16);
    RetrievalConfig cfg;
    cfg.n_way = 10;
    cfg.trials = 10;
    const RetrievalOutcome chance = nway_retrieval(q, g, identity(200), cfg);
    const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(chance.total));
    v.require(chance.total == 2000, "query-trials " + std::to_string(chance.total));
    v.require(std::abs(chance.accuracy() - 0.1) <= 3.0 * sigma, "random accuracy " + num(chance.accuracy()));
    v.require(nway_retrieval(g, g, identity(200), cfg).accuracy() == 1.0, "perfect accuracy below 1");
    cfg.threads = 3;
    v.require(nway_retrieval(q, g, identity(200), cfg).correct == chance.correct, "rerun differs");
    if (v.pass) v.detail = "random " + num(chance.accuracy()) + " (sigma " + num(sigma) + ")";
    return v;
  });

  criterion(6, "decline analogue: behavioral rho <= -0.99, window slope < 0, no-decay |rho| < 0.5", [&] {
    Verdict v;
    const RunSpec spec = default_run_spec(Preset::Desk);
    const DeclineReport behavior = behavioral_curves(reference.sessions);
    const double rho_r = behavior.trend(kMetricResponseAccuracy).spearman;
    v.require(rho_r <= -0.99, "rho(r,t) " + num(rho_r));
    const DeclineReport windows = per_window_models(reference, 5, spec.encoder, spec.train, spec.retrieval);
    const double slope = windows.trend(accuracy_metric(Direction::BrainToImage)).slope;
    v.require(slope < 0.0, "window accuracy slope " + num(slope));

    GenConfig flat;
    flat.r_min = flat.r_max;
    flat.noise_growth = 0.0;
    flat.baseline_shift = 0.0;
    const Dataset control = generate(flat);
    const double rho_flat = behavioral_curves(control.sessions).trend(kMetricResponseAccuracy).spearman;
    v.require(std::abs(rho_flat) < 0.5, "no-decay behavioral rho " + num(rho_flat));
    const DeclineReport flat_windows = per_window_models(control, 5, spec.encoder, spec.train, spec.retrieval);
    const double rho_flat_acc = flat_windows.trend(accuracy_metric(Direction::BrainToImage)).spearman;
    v.require(std::abs(rho_flat_acc) < 0.5, "no-decay window accuracy rho " + num(rho_flat_acc));
    v.detail += (v.detail.empty() ? "" : "; ") + std::string("rho(r,t) ") + num(rho_r) + ", window slope " + num(slope) +
                ", no-decay window rho " + num(rho_flat_acc);
    return v;
  }, 180.0);

  std::vector<std::string> first_pass;
  criterion(7, "forgetting order DCL+AFM > DCL+L2 > W/o CL and W/o CL drop >= 10 points, seeds {1,2,3}", [&] {
    Verdict v;
    first_pass = forgetting_runs(reference);
    double final_acc[3] = {0, 0, 0}, first_acc = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t s = 0; s < 3; ++s) {
        std::vector<ReportRow> b2i;
        for (const ReportRow& r : parse_report_csv(first_pass[m * 3 + s]))
          if (r.direction == Direction::BrainToImage) b2i.push_back(r);
        final_acc[m] += 100.0 * b2i.back().top1 / 3.0;
        if (m == 0) first_acc += 100.0 * b2i.front().top1 / 3.0;
      }
    }
    std::ostringstream summary;
    summary << "final top1 % W/o CL " << num(final_acc[0]) << " (step 1 " << num(first_acc) << "), DCL+L2 "
            << num(final_acc[1]) << ", DCL+AFM " << num(final_acc[2]);
    v.require(final_acc[2] > final_acc[1], "DCL+AFM not above DCL+L2");
    v.require(final_acc[1] > final_acc[0], "DCL+L2 not above W/o CL");
    v.require(first_acc - final_acc[0] >= 10.0, "W/o CL drop " + num(first_acc - final_acc[0]) + " points");
    v.detail += (v.detail.empty() ? "" : "; ") + summary.str();
    return v;
  }, 600.0);

  criterion(8, "repeating the forgetting experiment gives bit-identical report CSVs", [&] {
    Verdict v;
    v.require(!first_pass.empty(), "criterion 7 produced no runs");
    if (!v.pass) return v;
    const std::vector<std::string> second = forgetting_runs(reference);
    for (std::size_t i = 0; i < second.size(); ++i)
      v.require(second[i] == first_pass[i], std::string(kMethods[i / 3].label) + " seed " +
                                                std::to_string(kSeeds[i % 3]) + " differs");
    return v;
  });

  criterion(9, "dataset and checkpoint round trips and corruption classes", [&] {
    Verdict v;
    const auto ds_bytes = encode_dataset(reference);
    v.require(decode_dataset(ds_bytes) == reference, "dataset round trip");
    v.require(encode_dataset(decode_dataset(ds_bytes)) == ds_bytes, "dataset re-encode");
    const EncoderParams params = init_encoder(default_run_spec().encoder);
    const auto ck_bytes = encode_checkpoint(params, 3);
    const Checkpoint ck = decode_checkpoint(ck_bytes);
    v.require(ck.params == params && ck.step == 3, "checkpoint round trip");

    auto expect_throw = [&](const std::string& what, auto&& fn, auto tag) {
      using E = decltype(tag);
      try {
        fn();
        v.require(false, what + ": no error");
      } catch (const E&) {
      } catch (const std::exception& e) {
        v.require(false, what + ": wrong error " + e.what());
      }
    };
    for (const auto* bytes : {&ds_bytes, &ck_bytes}) {
      const bool is_ds = bytes == &ds_bytes;
      auto decode = [&](const std::vector<std::uint8_t>& b) {
        if (is_ds) decode_dataset(b);
        else decode_checkpoint(b);
      };
      const std::string kind = is_ds ? "dataset" : "checkpoint";
      auto b = *bytes;
      b[0] ^= 0xFF;
      expect_throw(kind + " magic", [&] { decode(b); }, MagicError(""));
      b = *bytes;
      b[4] = 9;
      expect_throw(kind + " version", [&] { decode(b); }, VersionError(""));
      b.assign(bytes->begin(), bytes->end() - 17);
      expect_throw(kind + " truncation", [&] { decode(b); }, TruncatedError(""));
      b = *bytes;
      b[b.size() - 9] ^= 0x10;
      expect_throw(kind + " checksum", [&] { decode(b); }, ChecksumError(""));
      Rng rng(is_ds ? 1 : 2);
      for (int k = 0; k < 200; ++k) {
        b = *bytes;
        b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
        if (k % 2) b.resize(rng.below(b.size()));
        try {
          decode(b);
        } catch (const FormatError&) {
        } catch (const std::exception& e) {
          v.require(false, kind + " garbage raised " + e.what());
        }
      }
    }
    expect_throw("dataset header mismatch", [&] { decode_dataset(ds_bytes, DatasetExpectation{32, 16, 40}); },
                 HeaderMismatchError(""));
    return v;
  });

  std::printf("%s: %d of 9 criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
  return failures == 0 ? 0 : 1;
}
