// SPDX-License-Identifier: Apache-2.0
//
// Short-to-long preference pairs and the reference objective computed from
// supplied per-token log-probabilities. No model is ever run here.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lcdoc/genclient.hpp"
#include "lcdoc/message.hpp"
#include "lcdoc/sft.hpp"

namespace lcdoc {

struct PreferencePair {
  std::string pair_id;
  std::string question;
  std::vector<PageRef> short_context;  // x_S
  std::vector<PageRef> long_context;   // x_L
  std::string chosen;                  // y_w, generated from x_S
  std::string rejected;                // y_l, generated from x_L

  std::vector<double> logp_theta_w_given_L;
  std::vector<double> logp_theta_l_given_L;
  std::vector<double> logp_ref_w_given_S;
  std::vector<double> logp_ref_l_given_S;

  /// Throws std::invalid_argument on length mismatch, empty responses,
  /// non-finite or positive log-probabilities.
  void validate_logprobs() const;
};

json to_json(const PreferencePair& pair);
PreferencePair preference_pair_from_json(const json& j);
std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path);

struct LongPOConfig {
  double beta = 0.1;
  double lambda = 0.01;

  void validate() const;
};

/// Chosen from the origin pages only (document order), rejected from the
/// full context. Log-probability fields are left empty.
PreferencePair build_preference_pair(const std::string& question, const AssembledContext& context,
                                     const std::vector<std::string>& origin_page_ids,
                                     ChatClient& policy, const std::string& model);

struct LongPOLoss {
  double loss = 0.0;
  double pref_term = 0.0;
  double nll_term = 0.0;
  std::vector<double> margins;
};

json to_json(const LongPOLoss& report);

/// log(1 + e^x) without overflow.
double softplus(double x);

/// beta * [(sum theta_w - sum ref_w) - (sum theta_l - sum ref_l)].
double preference_margin(const PreferencePair& pair, double beta);

LongPOLoss longpo_loss(const std::vector<PreferencePair>& pairs, const LongPOConfig& config = {});

/// d loss / d (every per-token log-probability), same layout as the input.
struct PairGradient {
  std::vector<double> theta_w;
  std::vector<double> theta_l;
  std::vector<double> ref_w;
  std::vector<double> ref_l;
};

std::vector<PairGradient> longpo_gradient(const std::vector<PreferencePair>& pairs,
                                          const LongPOConfig& config = {});

}  // namespace lcdoc
