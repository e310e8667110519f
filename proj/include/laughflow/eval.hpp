#pragma once

#include <optional>
#include <string>
#include <vector>

#include "laughflow/data.hpp"
#include "laughflow/detector.hpp"
#include "laughflow/types.hpp"

namespace laughflow::eval {

struct FlaggedValue {
  double value = 0.0;
  bool undefined = false;  // value forced to 0; excluded from aggregation
};

// Pearson correlation; zero variance on either side is reported as undefined
// rather than NaN.
FlaggedValue pearson(const VecD& a, const VecD& b);

// Probability-weighted mean of per-column cosine similarity. Columns where
// either embedding is the zero vector contribute cosine 0.
FlaggedValue laughter_sim(const MatD& ref, const MatD& gen, const VecD& w);

enum class SimWeight { max_ref_gen, reference };

SimWeight parse_sim_weight(const std::string& s);
std::string to_string(SimWeight w);

// Frame classification against the token templates with the burst direction
// projected out and the speaker envelope divided out; scored on frames whose
// true token is not silence.
double token_decode_accuracy(const MatF& features, const std::vector<int>& align,
                             const data::TokenBank& bank);

// Cosine between the average non-silence, non-burst spectrum and a speaker
// envelope. `silence_floor` is an absolute frame-energy threshold; pass 0 to
// derive it from this utterance (10% of its median frame energy).
double speaker_style_sim(const MatF& features, const VecF& envelope,
                         const BurstDetector& detector, double silence_floor = 0.0,
                         double burst_ceiling = 0.5);

double median_frame_energy(const MatF& features);

struct EvalItem {
  std::string id;
  MatF generated;
  VecD ref_prob;            // reference laughter probability trace
  MatD ref_emb;             // reference laughter embedding
  std::vector<int> align;   // alignment the generator was asked to speak
  VecF speaker_envelope;    // target speaker profile
};

struct ItemMetrics {
  std::string id;
  FlaggedValue timing;
  FlaggedValue sim;
  double token_accuracy = 0.0;
  double speaker_sim = 0.0;
  VecD gen_prob;  // detector trace on the generated features, kept for plots
};

struct RunReport {
  std::vector<ItemMetrics> items;
  double timing_pearson = 0.0;
  int timing_undefined = 0;
  double laughter_sim = 0.0;
  int sim_undefined = 0;
  double token_accuracy = 0.0;
  double speaker_sim = 0.0;
  double silence_floor = 0.0;   // calibration constants used
  double burst_ceiling = 0.5;
  SimWeight weight_mode = SimWeight::max_ref_gen;
};

// Runs the metric suite over every item. Undefined-flagged values are
// excluded from their metric's mean, with counts preserved in the report.
RunReport evaluate_run(const std::vector<EvalItem>& items, const data::TokenBank& bank,
                       SimWeight weight_mode = SimWeight::max_ref_gen,
                       double burst_ceiling = 0.5, int workers = 1);

}  // namespace laughflow::eval
