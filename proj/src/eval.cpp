#include "laughflow/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

namespace laughflow::eval {

namespace {

void run_indexed(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> cursor{0};
  auto worker = [&] {
    for (int i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

FlaggedValue pearson(const VecD& a, const VecD& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
  const VecD da = a.array() - a.mean();
  const VecD db = b.array() - b.mean();
  const double saa = da.squaredNorm();
  const double sbb = db.squaredNorm();
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {da.dot(db) / std::sqrt(saa * sbb), false};
}

FlaggedValue laughter_sim(const MatD& ref, const MatD& gen, const VecD& w) {
  if (ref.rows() != gen.rows() || ref.cols() != gen.cols()) {
    throw std::invalid_argument("laughter_sim: embedding shape mismatch");
  }
  if (w.size() != ref.cols()) throw std::invalid_argument("laughter_sim: weight length mismatch");
  double wsum = 0.0, acc = 0.0;
  for (Index j = 0; j < ref.cols(); ++j) {
    const double na = ref.col(j).norm();
    const double nb = gen.col(j).norm();
    const double cos = (na == 0.0 || nb == 0.0) ? 0.0 : ref.col(j).dot(gen.col(j)) / (na * nb);
    acc += w(j) * cos;
    wsum += w(j);
  }
  if (wsum == 0.0) return {0.0, true};
  return {acc / wsum, false};
}

SimWeight parse_sim_weight(const std::string& s) {
  if (s == "max") return SimWeight::max_ref_gen;
  if (s == "reference") return SimWeight::reference;
  throw std::invalid_argument("unknown similarity weight mode '" + s + "'");
}

std::string to_string(SimWeight w) {
  return w == SimWeight::max_ref_gen ? "max" : "reference";
}

double median_frame_energy(const MatF& features) {
  std::vector<double> e(size_t(features.cols()));
  for (Index j = 0; j < features.cols(); ++j) e[size_t(j)] = double(features.col(j).norm());
  std::sort(e.begin(), e.end());
  const size_t n = e.size();
  if (n == 0) throw std::invalid_argument("median_frame_energy: empty sequence");
  return n % 2 == 1 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
}

double token_decode_accuracy(const MatF& features, const std::vector<int>& align,
                             const data::TokenBank& bank) {
  const Index t = features.cols();
  const Index f = features.rows();
  if (Index(align.size()) != t) {
    throw std::invalid_argument("token_decode_accuracy: alignment length mismatch");
  }
  // strip the burst component so laughter cannot shadow the speech template
  MatF clean = features;
  for (Index j = 0; j < t; ++j) {
    clean.col(j) -= bank.burst_unit * features.col(j).dot(bank.burst_unit);
  }
  VecD energy(t);
  for (Index j = 0; j < t; ++j) energy(j) = double(clean.col(j).norm());
  std::vector<double> sorted(energy.data(), energy.data() + t);
  std::sort(sorted.begin(), sorted.end());
  const double median =
      t % 2 == 1 ? sorted[size_t(t / 2)] : 0.5 * (sorted[size_t(t / 2 - 1)] + sorted[size_t(t / 2)]);
  const double floor = 0.1 * median;
  // estimate the speaker envelope from loud frames via the mean speech template
  VecD speech_mean = VecD::Zero(f);
  for (Index k = 1; k < bank.templates.cols(); ++k) {
    speech_mean += bank.templates.col(k).cast<double>();
  }
  speech_mean /= double(bank.templates.cols() - 1);
  VecD env = VecD::Zero(f);
  Index kept = 0;
  for (Index j = 0; j < t; ++j) {
    if (energy(j) < floor) continue;
    env += clean.col(j).cast<double>();
    ++kept;
  }
  if (kept == 0) {
    env = clean.rowwise().sum().cast<double>();
    kept = t;
  }
  env = (env / double(kept)).cwiseQuotient(speech_mean).cwiseMax(0.05);
  Index scored = 0, correct = 0;
  for (Index j = 0; j < t; ++j) {
    if (align[size_t(j)] == 0) continue;
    const VecD g = clean.col(j).cast<double>().cwiseQuotient(env);
    const double gn = g.norm();
    int best = 0;
    double best_cos = -2.0;
    for (Index k = 0; k < bank.templates.cols(); ++k) {
      const VecD tmpl = bank.templates.col(k).cast<double>();
      const double cos = gn == 0.0 ? 0.0 : g.dot(tmpl) / (gn * tmpl.norm());
      if (cos > best_cos) {
        best_cos = cos;
        best = int(k);
      }
    }
    ++scored;
    if (best == align[size_t(j)]) ++correct;
  }
  if (scored == 0) throw std::invalid_argument("token_decode_accuracy: no non-silence frames");
  return double(correct) / double(scored);
}

double speaker_style_sim(const MatF& features, const VecF& envelope,
                         const BurstDetector& detector, double silence_floor,
                         double burst_ceiling) {
  const Index t = features.cols();
  if (t < 1) throw std::invalid_argument("speaker_style_sim: empty features");
  if (silence_floor <= 0.0) silence_floor = 0.1 * median_frame_energy(features);
  const DetectorOutput det = detector.detect(features);
  VecD mean = VecD::Zero(features.rows());
  Index kept = 0;
  for (Index j = 0; j < t; ++j) {
    if (double(features.col(j).norm()) < silence_floor) continue;
    if (det.prob(j) > burst_ceiling) continue;
    mean += features.col(j).cast<double>();
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("speaker_style_sim: every frame excluded");
  mean /= double(kept);
  const VecD env = envelope.cast<double>();
  const double denom = mean.norm() * env.norm();
  if (denom == 0.0) throw std::invalid_argument("speaker_style_sim: zero spectrum");
  return mean.dot(env) / denom;
}

RunReport evaluate_run(const std::vector<EvalItem>& items, const data::TokenBank& bank,
                       SimWeight weight_mode, double burst_ceiling, int workers) {
  if (items.empty()) throw std::invalid_argument("evaluate_run: no items");
  BurstDetector detector(bank);
  // one absolute silence threshold across the run: 10% of the pooled median
  std::vector<double> energies;
  for (const auto& item : items) {
    for (Index j = 0; j < item.generated.cols(); ++j) {
      energies.push_back(double(item.generated.col(j).norm()));
    }
  }
  std::sort(energies.begin(), energies.end());
  const size_t n = energies.size();
  const double median =
      n % 2 == 1 ? energies[n / 2] : 0.5 * (energies[n / 2 - 1] + energies[n / 2]);
  RunReport report;
  report.silence_floor = 0.1 * median;
  report.burst_ceiling = burst_ceiling;
  report.weight_mode = weight_mode;
  report.items.resize(items.size());
  run_indexed(int(items.size()), workers, [&](int i) {
    const EvalItem& item = items[size_t(i)];
    ItemMetrics m;
    m.id = item.id;
    const DetectorOutput det = detector.detect(item.generated);
    if (det.prob.size() != item.ref_prob.size()) {
      throw std::invalid_argument("evaluate_run: reference/generated length mismatch for " +
                                  item.id);
    }
    m.timing = pearson(item.ref_prob, det.prob);
    VecD w(det.prob.size());
    for (Index j = 0; j < w.size(); ++j) {
      w(j) = weight_mode == SimWeight::max_ref_gen ? std::max(item.ref_prob(j), det.prob(j))
                                                   : item.ref_prob(j);
    }
    m.sim = laughter_sim(item.ref_emb, det.emb, w);
    m.token_accuracy = token_decode_accuracy(item.generated, item.align, bank);
    m.speaker_sim = speaker_style_sim(item.generated, item.speaker_envelope, detector,
                                      report.silence_floor, burst_ceiling);
    m.gen_prob = det.prob;
    report.items[size_t(i)] = std::move(m);
  });
  double timing = 0.0, sim = 0.0, token = 0.0, speaker = 0.0;
  int timing_n = 0, sim_n = 0;
  for (const auto& m : report.items) {
    if (m.timing.undefined) {
      ++report.timing_undefined;
    } else {
      timing += m.timing.value;
      ++timing_n;
    }
    if (m.sim.undefined) {
      ++report.sim_undefined;
    } else {
      sim += m.sim.value;
      ++sim_n;
    }
    token += m.token_accuracy;
    speaker += m.speaker_sim;
  }
  report.timing_pearson = timing_n > 0 ? timing / timing_n : 0.0;
  report.laughter_sim = sim_n > 0 ? sim / sim_n : 0.0;
  report.token_accuracy = token / double(report.items.size());
  report.speaker_sim = speaker / double(report.items.size());
  return report;
}

}  // namespace laughflow::eval
