// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/longpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "sft_internal.hpp"

namespace lcdoc {

namespace {

void check_series(const std::vector<double>& v, const std::string& id, const char* name) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::invalid_argument(fmt::format("pair {}: {}[{}] is not finite", id, name, i));
    }
    if (v[i] > 0.0) {
      throw std::invalid_argument(
          fmt::format("pair {}: {}[{}] = {} is a positive log-probability", id, name, i, v[i]));
    }
  }
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

json refs_to_json(const std::vector<PageRef>& refs) {
  json out = json::array();
  for (const auto& r : refs) out.push_back(to_json(r));
  return out;
}

std::vector<PageRef> refs_from_json(const json& j) {
  std::vector<PageRef> out;
  for (const auto& r : j) out.push_back(page_ref_from_json(r));
  return out;
}

}  // namespace

void PreferencePair::validate_logprobs() const {
  if (logp_theta_w_given_L.size() != logp_ref_w_given_S.size()) {
    throw std::invalid_argument(fmt::format(
        "pair {}: chosen log-probability lengths differ ({} policy vs {} reference)", pair_id,
        logp_theta_w_given_L.size(), logp_ref_w_given_S.size()));
  }
  if (logp_theta_l_given_L.size() != logp_ref_l_given_S.size()) {
    throw std::invalid_argument(fmt::format(
        "pair {}: rejected log-probability lengths differ ({} policy vs {} reference)", pair_id,
        logp_theta_l_given_L.size(), logp_ref_l_given_S.size()));
  }
  if (logp_theta_w_given_L.empty() || logp_theta_l_given_L.empty()) {
    throw std::invalid_argument(fmt::format("pair {}: empty response log-probabilities", pair_id));
  }
  check_series(logp_theta_w_given_L, pair_id, "logp_theta_w_given_L");
  check_series(logp_theta_l_given_L, pair_id, "logp_theta_l_given_L");
  check_series(logp_ref_w_given_S, pair_id, "logp_ref_w_given_S");
  check_series(logp_ref_l_given_S, pair_id, "logp_ref_l_given_S");
}

json to_json(const PreferencePair& p) {
  return json{{"pair_id", p.pair_id},
              {"question", p.question},
              {"short_context", refs_to_json(p.short_context)},
              {"long_context", refs_to_json(p.long_context)},
              {"chosen", p.chosen},
              {"rejected", p.rejected},
              {"logp_theta_w_given_L", p.logp_theta_w_given_L},
              {"logp_theta_l_given_L", p.logp_theta_l_given_L},
              {"logp_ref_w_given_S", p.logp_ref_w_given_S},
              {"logp_ref_l_given_S", p.logp_ref_l_given_S}};
}

PreferencePair preference_pair_from_json(const json& j) {
  PreferencePair p;
  p.pair_id = j.value("pair_id", "");
  p.question = j.value("question", "");
  if (j.contains("short_context")) p.short_context = refs_from_json(j.at("short_context"));
  if (j.contains("long_context")) p.long_context = refs_from_json(j.at("long_context"));
  p.chosen = j.value("chosen", "");
  p.rejected = j.value("rejected", "");
  p.logp_theta_w_given_L = j.at("logp_theta_w_given_L").get<std::vector<double>>();
  p.logp_theta_l_given_L = j.at("logp_theta_l_given_L").get<std::vector<double>>();
  p.logp_ref_w_given_S = j.at("logp_ref_w_given_S").get<std::vector<double>>();
  p.logp_ref_l_given_S = j.at("logp_ref_l_given_S").get<std::vector<double>>();
  return p;
}

std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(preference_pair_from_json(j));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

void LongPOConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument(fmt::format("beta must be positive, got {}", beta));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument(fmt::format("lambda must be non-negative, got {}", lambda));
  }
}

PreferencePair build_preference_pair(const std::string& question, const AssembledContext& context,
                                     const std::vector<std::string>& origin_page_ids,
                                     ChatClient& policy, const std::string& model) {
  if (origin_page_ids.empty()) throw std::invalid_argument("preference pair needs origin pages");
  PreferencePair pair;
  pair.question = question;
  pair.long_context = context.pages;
  for (const auto& id : origin_page_ids) {
    auto it = std::find_if(context.pages.begin(), context.pages.end(),
                           [&](const PageRef& r) { return r.page_id == id; });
    if (it == context.pages.end()) {
      throw std::invalid_argument(fmt::format("origin page {} is not in the long context", id));
    }
    pair.short_context.push_back(*it);
  }
  std::sort(pair.short_context.begin(), pair.short_context.end(),
            [](const PageRef& a, const PageRef& b) {
              return std::tie(a.doc_id, a.index) < std::tie(b.doc_id, b.index);
            });
  pair.short_context.erase(std::unique(pair.short_context.begin(), pair.short_context.end()),
                           pair.short_context.end());

  const auto qkey = short_hash(question);
  auto request = [&](const std::vector<PageRef>& pages, const char* side) {
    ChatRequest req;
    req.model = model;
    req.request_tag = fmt::format("longpo-{}:{}:{}", side, qkey, detail::pages_key(pages));
    auto items = detail::page_items(pages);
    items.push_back(ContentItem::make_text(question));
    req.messages.push_back(Message{Role::user, std::move(items)});
    return req;
  };
  pair.chosen = trim(complete_text(policy, request(pair.short_context, "chosen")));
  pair.rejected = trim(complete_text(policy, request(pair.long_context, "rejected")));
  pair.pair_id = fmt::format("longpo-{}-{}", qkey, detail::pages_key(pair.long_context));
  return pair;
}

json to_json(const LongPOLoss& r) {
  return json{{"loss", r.loss},
              {"pref_term", r.pref_term},
              {"nll_term", r.nll_term},
              {"per_pair_margins", r.margins}};
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double preference_margin(const PreferencePair& p, double beta) {
  return beta * ((sum(p.logp_theta_w_given_L) - sum(p.logp_ref_w_given_S)) -
                 (sum(p.logp_theta_l_given_L) - sum(p.logp_ref_l_given_S)));
}

LongPOLoss longpo_loss(const std::vector<PreferencePair>& pairs, const LongPOConfig& config) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("LongPO loss needs at least one pair");
  LongPOLoss out;
  double pref = 0.0;
  double nll = 0.0;
  for (const auto& p : pairs) {
    p.validate_logprobs();
    const double m = preference_margin(p, config.beta);
    out.margins.push_back(m);
    pref += config.lambda * softplus(-m);
    nll += -sum(p.logp_theta_w_given_L) / static_cast<double>(p.logp_theta_w_given_L.size());
  }
  const auto n = static_cast<double>(pairs.size());
  out.pref_term = pref / n;
  out.nll_term = nll / n;
  out.loss = out.pref_term + out.nll_term;
  return out;
}

std::vector<PairGradient> longpo_gradient(const std::vector<PreferencePair>& pairs,
                                          const LongPOConfig& config) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("LongPO gradient needs at least one pair");
  const auto n = static_cast<double>(pairs.size());
  std::vector<PairGradient> out;
  for (const auto& p : pairs) {
    p.validate_logprobs();
    const double m = preference_margin(p, config.beta);
    // d/dm of lambda * softplus(-m) is -lambda * sigmoid(-m).
    const double g = config.lambda * sigmoid(-m) * config.beta / n;
    const double tokens = static_cast<double>(p.logp_theta_w_given_L.size());
    PairGradient grad;
    grad.theta_w.assign(p.logp_theta_w_given_L.size(), -g - 1.0 / (tokens * n));
    grad.ref_w.assign(p.logp_ref_w_given_S.size(), g);
    grad.theta_l.assign(p.logp_theta_l_given_L.size(), g);
    grad.ref_l.assign(p.logp_ref_l_given_S.size(), -g);
    out.push_back(std::move(grad));
  }
  return out;
}

}  // namespace lcdoc
