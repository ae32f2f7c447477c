// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "lcdoc/corpus.hpp"
#include "lcdoc/cpt.hpp"
#include "lcdoc/evalagg.hpp"
#include "lcdoc/flagging.hpp"
#include "lcdoc/genclient.hpp"
#include "lcdoc/longpo.hpp"
#include "lcdoc/merge.hpp"
#include "lcdoc/prompts.hpp"
#include "lcdoc/review_server.hpp"
#include "lcdoc/schedule.hpp"
#include "lcdoc/sft.hpp"

namespace lcdoc::cli {

namespace fs = std::filesystem;

namespace {

// Per-run bookkeeping that ends up in <out>/manifest.json.
struct RunRecord {
  std::string command;
  fs::path out_dir;
  json config = json::object();
  std::uint64_t seed = 0;
  json input_hashes = json::object();
  json counts = json::object();
  json extra = json::object();

  void add_input(const std::string& role, const fs::path& path) {
    input_hashes[role] = sha256_hex(read_file(path));
  }
};

void write_output(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, contents);
}

void write_manifest(const RunRecord& r) {
  json m{{"command", r.command},
         {"config", r.config},
         {"config_hash", sha256_hex(r.config.dump())},
         {"seed", r.seed},
         {"input_hashes", r.input_hashes},
         {"counts", r.counts}};
  for (const auto& [k, v] : r.extra.items()) m[k] = v;
  write_output(r.out_dir / "manifest.json", m.dump(2) + "\n");
}

// Resolved option values of one subcommand: given values win over
// defaults. Output locations and the config path are not part of the hash.
json resolved_config(const CLI::App& app) {
  static const std::set<std::string> skip{"help", "out", "config"};
  json out = json::object();
  for (const auto* opt : app.get_options()) {
    auto name = opt->get_single_name();
    if (skip.count(name)) continue;
    if (opt->get_expected_max() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      out[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (!opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    } else {
      out[name] = nullptr;
    }
  }
  return out;
}

// --- shared option groups ---------------------------------------------------

struct ClientOptions {
  std::string mock;
  std::string base_url;
  std::size_t max_in_flight = 4;
  std::string templates;

  void add(CLI::App* app) {
    app->add_option("--mock", mock, "Answer from a JSONL mock fixture instead of the HTTP endpoint")
        ->check(CLI::ExistingFile);
    app->add_option("--base-url", base_url, "Endpoint base URL (overrides GENAI_BASE_URL)");
    app->add_option("--max-in-flight", max_in_flight, "Concurrent requests per batch")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--templates", templates, "Directory of <name>.txt prompt overrides")
        ->check(CLI::ExistingDirectory);
  }

  std::unique_ptr<ChatClient> make_client(RunRecord& record) const {
    auto library = PromptLibrary::defaults();
    if (!templates.empty()) library.load_overrides(templates);
    set_prompts(std::move(library));
    if (!mock.empty()) {
      record.add_input("mock", mock);
      return std::make_unique<MockChatClient>(load_mock_rules(mock));
    }
    return std::make_unique<HttpChatClient>(EndpointConfig::from_env(base_url));
  }
};

Corpus load_corpus(RunRecord& record, const std::string& manifest, const std::string& neighbors) {
  record.add_input("corpus", manifest);
  auto corpus = load_manifest(manifest);
  if (!neighbors.empty()) {
    record.add_input("neighbors", neighbors);
    corpus.neighbors = load_neighbors(neighbors);
  }
  return corpus;
}

// Training examples or CPT records, detected per line.
std::vector<TrainingExample> load_any_examples(const fs::path& path) {
  std::vector<TrainingExample> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(j.contains("messages") ? training_example_from_json(j)
                                           : to_training_example(cpt_example_from_json(j)));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

std::vector<ScheduleItem> load_schedule_input(const fs::path& path) {
  std::vector<ScheduleItem> out;
  bool examples = false;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (line == 1 || !examples) examples = !j.contains("page_count");
    try {
      out.push_back(examples ? ScheduleItem::from_example(
                                   j.contains("messages") ? training_example_from_json(j)
                                                          : to_training_example(cpt_example_from_json(j)))
                             : schedule_item_from_json(j));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

std::string items_jsonl(const std::vector<ScheduleItem>& items) {
  std::vector<json> records;
  for (const auto& i : items) records.push_back(to_json(i));
  return to_jsonl(records);
}

// --- subcommands ----------------------------------------------------------------

struct Command {
  CLI::App* app = nullptr;
  std::string name;
  std::function<void(RunRecord&)> body;
};

struct CommonOptions {
  std::string out = ".";
  std::uint64_t seed = 0;
};

void add_common(CLI::App* app, CommonOptions& c, const char* out_help = "Output directory") {
  app->add_option("--out", c.out, out_help)->capture_default_str();
  app->add_option("--seed", c.seed, "Base seed; recorded in the run manifest")->capture_default_str();
}

const std::vector<std::string> kStages{"short", "long"};

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Long-document VQA data toolkit: corpus ingest, synthetic data generation, "
               "scheduling, merging, evaluation and benchmark review."};
  app.name("lcdoc");
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with one [subcommand] section per command");
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str()
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.set_version_flag("--version", "lcdoc 0.1.0");

  std::vector<Command> commands;
  std::vector<std::unique_ptr<CommonOptions>> commons;
  auto add_command = [&](CLI::App* parent, const std::string& name, const std::string& desc,
                         const char* out_help = "Output directory") {
    auto* sub = parent->add_subcommand(name, desc);
    sub->fallthrough();
    commons.push_back(std::make_unique<CommonOptions>());
    add_common(sub, *commons.back(), out_help);
    return std::make_pair(sub, commons.back().get());
  };
  auto register_body = [&](CLI::App* sub, const std::string& name, CommonOptions* common,
                           std::function<void(RunRecord&, const CommonOptions&)> body) {
    Command c;
    c.app = sub;
    c.name = name;
    c.body = [body, common](RunRecord& r) { body(r, *common); };
    commands.push_back(std::move(c));
  };

  // ingest ----------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "ingest", "Validate a corpus manifest and write it in canonical form");
    auto manifest = std::make_shared<std::string>();
    auto neighbors = std::make_shared<std::string>();
    sub->add_option("--manifest", *manifest, "Corpus manifest JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--neighbors", *neighbors, "Hard-negative neighbor JSONL")->check(CLI::ExistingFile);
    register_body(sub, "ingest", common, [=](RunRecord& r, const CommonOptions& c) {
      const auto corpus = load_corpus(r, *manifest, *neighbors);
      const fs::path out = c.out;
      write_output(out / "corpus.jsonl", serialize_manifest(corpus));
      if (corpus.neighbors) write_output(out / "neighbors.jsonl", serialize_neighbors(*corpus.neighbors));
      r.counts = {{"documents", corpus.documents().size()},
                  {"pages", corpus.page_total()},
                  {"question_pages", filter_question_pages(corpus).size()},
                  {"neighbor_lists", corpus.neighbors ? corpus.neighbors->size() : 0}};
    });
  }

  // cpt-gen ---------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "cpt-gen", "Build continued-pretraining examples");
    struct Opts {
      std::string corpus, task, budget = "cpt-short", labeler_model = "labeler";
      std::vector<std::string> labels{"tables", "figures", "headings"};
      std::int64_t ngram_min = 5, ngram_max = 8, answer_words = 12;
      ClientOptions client;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--corpus", o->corpus, "Corpus manifest JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--task", o->task, "Task to build")
        ->required()
        ->check(CLI::IsMember({"fim", "unshuffle", "retrieval_key", "retrieval_position", "counting"}));
    sub->add_option("--budget-preset", o->budget, "Token budget preset")->capture_default_str();
    sub->add_option("--labels", o->labels, "Instance labels for the counting task")->capture_default_str();
    sub->add_option("--labeler-model", o->labeler_model)->capture_default_str();
    sub->add_option("--ngram-min", o->ngram_min)->capture_default_str();
    sub->add_option("--ngram-max", o->ngram_max)->capture_default_str();
    sub->add_option("--answer-words", o->answer_words)->capture_default_str();
    o->client.add(sub);
    register_body(sub, "cpt-gen", common, [=](RunRecord& r, const CommonOptions& c) {
      const auto corpus = load_corpus(r, o->corpus, "");
      CptRunOptions opts;
      opts.task = cpt_task_from_string(o->task);
      opts.seed = c.seed;
      opts.budget = TokenBudget::preset(o->budget);
      opts.retrieval = {o->ngram_min, o->ngram_max, o->answer_words};
      opts.instance_labels = o->labels;
      opts.labeler_model = o->labeler_model;
      opts.max_in_flight = o->client.max_in_flight;
      std::unique_ptr<ChatClient> labeler;
      if (opts.task == CptTask::counting) labeler = o->client.make_client(r);
      const auto result = generate_cpt(corpus, opts, labeler.get());
      std::vector<json> records;
      for (const auto& ex : result.examples) records.push_back(to_json(ex));
      write_output(fs::path(c.out) / "cpt.jsonl", to_jsonl(records));
      json skipped = json::array();
      for (const auto& [doc, why] : result.skipped) skipped.push_back({{"doc_id", doc}, {"reason", why}});
      r.counts = {{"examples", result.examples.size()}, {"skipped", result.skipped.size()}};
      r.extra["skipped"] = skipped;
    });
  }

  // sft-gen ---------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "sft-gen", "Generate synthetic SFT conversations");
    struct Opts {
      std::string corpus, neighbors, pipeline = "recursive", question_source = "single_page";
      std::string strategy, budget = "sft-short", mode = "visual_pages";
      std::optional<std::int64_t> context_size, turns;
      std::size_t num_examples = 8, k = 3;
      std::int64_t n_max = 5;
      bool include_unanswerable = false, quality = false;
      std::string question_model = "question-generator", extract_model = "extractor",
                  teacher_model = "teacher", judge_model = "judge", filter_model = "filter-answerer",
                  quality_model = "quality-checker";
      ClientOptions client;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--corpus", o->corpus, "Corpus manifest JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--neighbors", o->neighbors, "Hard-negative neighbor JSONL")->check(CLI::ExistingFile);
    sub->add_option("--pipeline", o->pipeline)
        ->capture_default_str()
        ->check(CLI::IsMember({"plain", "recursive", "distractors_short", "adjacent_short", "hn_short",
                               "multiturn", "unanswerable"}));
    sub->add_option("--question-source", o->question_source)
        ->capture_default_str()
        ->check(CLI::IsMember({"single_page", "magpie", "multi_page"}));
    sub->add_option("--strategy", o->strategy, "Context strategy (default depends on the pipeline)")
        ->check(CLI::IsMember({"adjacent_range", "whole_document", "hard_negative", "distractor_short",
                               "adjacent_short", "hn_short"}));
    sub->add_option("--context-size", o->context_size, "Pages per context");
    sub->add_option("--num-examples", o->num_examples)->capture_default_str();
    sub->add_option("--budget-preset", o->budget)->capture_default_str();
    sub->add_option("--k", o->k, "Pages kept by recursive answering")->capture_default_str();
    sub->add_option("--mode", o->mode, "Recursive evidence mode")
        ->capture_default_str()
        ->check(CLI::IsMember({"visual_pages", "text_evidence"}));
    sub->add_option("--turns", o->turns, "Multi-turn length (default: seeded 2..4)");
    sub->add_option("--questions-max", o->n_max, "Upper bound on questions per request")->capture_default_str();
    sub->add_flag("--include-unanswerable", o->include_unanswerable);
    sub->add_flag("--quality-check", o->quality, "Drop single-turn answers with unsupported assertions");
    sub->add_option("--question-model", o->question_model)->capture_default_str();
    sub->add_option("--extract-model", o->extract_model)->capture_default_str();
    sub->add_option("--teacher-model", o->teacher_model)->capture_default_str();
    sub->add_option("--judge-model", o->judge_model)->capture_default_str();
    sub->add_option("--filter-model", o->filter_model)->capture_default_str();
    sub->add_option("--quality-model", o->quality_model)->capture_default_str();
    o->client.add(sub);
    register_body(sub, "sft-gen", common, [=](RunRecord& r, const CommonOptions& c) {
      const auto corpus = load_corpus(r, o->corpus, o->neighbors);
      auto client = o->client.make_client(r);
      SftRunOptions opts;
      opts.pipeline = sft_pipeline_from_string(o->pipeline);
      opts.question_source = question_pipeline_from_string(o->question_source);
      if (!o->strategy.empty()) opts.strategy = context_strategy_from_string(o->strategy);
      opts.context.size = o->context_size;
      opts.num_examples = o->num_examples;
      opts.seed = c.seed;
      opts.budget = TokenBudget::preset(o->budget);
      opts.questions.model = o->question_model;
      opts.questions.n_max = o->n_max;
      opts.recursive.k = o->k;
      opts.recursive.mode = evidence_mode_from_string(o->mode);
      opts.recursive.extract_model = o->extract_model;
      opts.recursive.answer_model = o->teacher_model;
      opts.recursive.max_in_flight = o->client.max_in_flight;
      opts.filter = {o->filter_model, o->judge_model};
      opts.teacher_model = o->teacher_model;
      opts.multiturn.turns = o->turns;
      opts.multiturn.question_model = o->question_model;
      opts.multiturn.recursive = opts.recursive;
      const SftClients clients{client.get(), client.get(), client.get(), client.get()};
      auto result = run_sft(corpus, opts, clients);

      auto examples = compose_examples(std::move(result.examples), o->include_unanswerable);
      std::size_t quality_dropped = 0;
      if (o->quality) {
        QualityConfig qc{o->quality_model, o->k, o->client.max_in_flight};
        std::vector<TrainingExample> kept;
        for (auto& ex : examples) {
          if (ex.messages.size() == 2) {
            AssembledContext ctx;
            ctx.pages = ex.page_refs;
            ctx.origin = ex.origin_marks;
            if (!quality_check(ex.messages.back().joined_text(), ctx, *client, qc).supported) {
              ++quality_dropped;
              continue;
            }
          }
          kept.push_back(std::move(ex));
        }
        examples = std::move(kept);
      }
      write_output(fs::path(c.out) / "sft.jsonl", training_examples_to_jsonl(examples));
      json skipped = json::array();
      for (const auto& [page, why] : result.skipped) skipped.push_back({{"page_id", page}, {"reason", why}});
      r.counts = {{"examples", examples.size()},
                  {"skipped", result.skipped.size()},
                  {"quality_dropped", quality_dropped}};
      r.extra["skipped"] = skipped;
    });
  }

  // longpo-pairs ----------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "longpo-pairs", "Build short-to-long preference pairs from SFT examples");
    struct Opts {
      std::string examples, policy_model = "policy";
      std::size_t limit = 0;
      ClientOptions client;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--examples", o->examples, "SFT examples JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--policy-model", o->policy_model)->capture_default_str();
    sub->add_option("--limit", o->limit, "Maximum pairs (0 = no limit)")->capture_default_str();
    o->client.add(sub);
    register_body(sub, "longpo-pairs", common, [=](RunRecord& r, const CommonOptions& c) {
      r.add_input("examples", o->examples);
      const auto examples = load_training_examples(o->examples);
      auto client = o->client.make_client(r);
      std::vector<json> records;
      std::size_t skipped = 0;
      for (const auto& ex : examples) {
        if (o->limit != 0 && records.size() >= o->limit) break;
        std::vector<std::string> origin;
        for (std::size_t i = 0; i < ex.page_refs.size(); ++i) {
          if (ex.origin_marks[i]) origin.push_back(ex.page_refs[i].page_id);
        }
        if (ex.messages.size() != 2 || origin.empty() || origin.size() == ex.page_refs.size()) {
          ++skipped;
          continue;
        }
        std::string question = ex.messages.front().joined_text();
        if (ex.trace && ex.trace->contains("question")) {
          question = ex.trace->at("question").at("text").get<std::string>();
        }
        AssembledContext ctx;
        ctx.pages = ex.page_refs;
        ctx.origin = ex.origin_marks;
        records.push_back(to_json(build_preference_pair(question, ctx, origin, *client, o->policy_model)));
      }
      write_output(fs::path(c.out) / "pairs.jsonl", to_jsonl(records));
      r.counts = {{"pairs", records.size()}, {"skipped", skipped}};
    });
  }

  // longpo-loss -----------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "longpo-loss", "Evaluate the preference objective on scored pairs");
    struct Opts {
      std::string pairs;
      double beta = 0.1, lambda = 0.01;
      bool gradients = false;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--pairs", o->pairs, "Pairs JSONL with per-token log-probabilities")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--beta", o->beta)->capture_default_str();
    sub->add_option("--lambda", o->lambda)->capture_default_str();
    sub->add_flag("--gradients", o->gradients, "Also write per-token gradients");
    register_body(sub, "longpo-loss", common, [=](RunRecord& r, const CommonOptions& c) {
      r.add_input("pairs", o->pairs);
      const auto pairs = load_preference_pairs(o->pairs);
      const LongPOConfig config{o->beta, o->lambda};
      const auto report = to_json(longpo_loss(pairs, config));
      std::cout << report.dump(2) << "\n";
      write_output(fs::path(c.out) / "loss.json", report.dump(2) + "\n");
      if (o->gradients) {
        std::vector<json> records;
        const auto grads = longpo_gradient(pairs, config);
        for (std::size_t i = 0; i < grads.size(); ++i) {
          records.push_back({{"pair_id", pairs[i].pair_id},
                             {"theta_w", grads[i].theta_w},
                             {"theta_l", grads[i].theta_l},
                             {"ref_w", grads[i].ref_w},
                             {"ref_l", grads[i].ref_l}});
        }
        write_output(fs::path(c.out) / "gradients.jsonl", to_jsonl(records));
      }
      r.counts = {{"pairs", pairs.size()}};
    });
  }

  // schedule --------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "schedule", "Split examples into stages and order each stage");
    struct Opts {
      std::vector<std::string> examples;
      std::string stage, curriculum = "none";
      std::int64_t bucket_width = 16;
      double mix_fraction = 0.1;
      bool no_page_indices = false;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--examples", o->examples, "Example JSONL files (SFT or CPT)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--stage", o->stage, "Only emit this stage")->check(CLI::IsMember(kStages));
    sub->add_option("--curriculum", o->curriculum)
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "length", "length-difficulty"}));
    sub->add_option("--bucket-width", o->bucket_width)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--mix-fraction", o->mix_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--no-page-indices", o->no_page_indices, "Do not insert page index markers");
    register_body(sub, "schedule", common, [=](RunRecord& r, const CommonOptions& c) {
      std::vector<TrainingExample> examples;
      for (std::size_t i = 0; i < o->examples.size(); ++i) {
        r.add_input(fmt::format("examples[{}]", i), o->examples[i]);
        auto part = load_any_examples(o->examples[i]);
        std::move(part.begin(), part.end(), std::back_inserter(examples));
      }
      std::map<std::string, TrainingExample> by_id;
      std::vector<ScheduleItem> items;
      for (auto& ex : examples) {
        if (!o->no_page_indices) ex = inject_page_indices(std::move(ex));
        items.push_back(ScheduleItem::from_example(ex));
        const auto id = ex.example_id;
        if (!by_id.emplace(id, std::move(ex)).second) {
          throw std::runtime_error(fmt::format("duplicate example id {}", id));
        }
      }
      const auto split = split_stages(items);
      const fs::path out = c.out;
      r.counts = {{"examples", items.size()}, {"dropped", split.dropped.size()}};
      for (const auto& [name, part] : {std::pair{std::string("short"), &split.short_items},
                                       std::pair{std::string("long"), &split.long_items}}) {
        if (!o->stage.empty() && o->stage != name) continue;
        CurriculumConfig cc;
        cc.kind = curriculum_kind_from_string(o->curriculum);
        cc.bucket_width = o->bucket_width;
        cc.mix_fraction = o->mix_fraction;
        cc.seed = derive_seed(c.seed, name);
        const auto ordered = order_curriculum(*part, cc);
        std::vector<TrainingExample> stage_examples;
        for (const auto& item : ordered) {
          auto ex = by_id.at(item.example_id);
          ex.stage = stage_from_string(name);
          stage_examples.push_back(std::move(ex));
        }
        write_output(out / fmt::format("{}.schedule.jsonl", name), items_jsonl(ordered));
        write_output(out / fmt::format("{}.examples.jsonl", name),
                     training_examples_to_jsonl(stage_examples));
        r.counts[name] = ordered.size();
      }
      write_output(out / "dropped.jsonl", items_jsonl(split.dropped));
    });
  }

  // pack ------------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "pack", "Pack a stage into fixed-budget sequences");
    struct Opts {
      std::string input, stage, family = "mistral", curriculum;
      std::optional<std::int64_t> budget;
      std::int64_t bucket_width = 16;
      double mix_fraction = 0.1;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--input", o->input, "Schedule items or examples JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--stage", o->stage)->required()->check(CLI::IsMember(kStages));
    sub->add_option("--family", o->family, "Budget defaults: mistral or qwen")
        ->capture_default_str()
        ->check(CLI::IsMember({"mistral", "qwen"}));
    sub->add_option("--budget", o->budget, "Tokens per packed sequence")->check(CLI::PositiveNumber);
    sub->add_option("--curriculum", o->curriculum, "Reorder before packing (default: keep input order)")
        ->check(CLI::IsMember({"none", "length", "length-difficulty"}));
    sub->add_option("--bucket-width", o->bucket_width)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--mix-fraction", o->mix_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    register_body(sub, "pack", common, [=](RunRecord& r, const CommonOptions& c) {
      r.add_input("input", o->input);
      auto items = load_schedule_input(o->input);
      const auto stage = stage_from_string(o->stage);
      if (!o->curriculum.empty()) {
        CurriculumConfig cc;
        cc.kind = curriculum_kind_from_string(o->curriculum);
        cc.bucket_width = o->bucket_width;
        cc.mix_fraction = o->mix_fraction;
        cc.seed = derive_seed(c.seed, o->stage);
        items = order_curriculum(std::move(items), cc);
      }
      const auto budget = o->budget.value_or(StagePlan::defaults(stage, o->family).pack_budget_tokens);
      const auto packs = pack_sequences(items, budget, stage);
      std::vector<json> records;
      std::int64_t tokens = 0;
      for (const auto& p : packs) {
        records.push_back(to_json(p));
        tokens += p.total_tokens;
      }
      write_output(fs::path(c.out) / "packs.jsonl", to_jsonl(records));
      r.counts = {{"packs", packs.size()}, {"examples", items.size()}, {"tokens", tokens}, {"budget", budget}};
    });
  }

  // merge -----------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "merge", "Apply a scaled task vector to a target model");
    struct Opts {
      std::string recipe, presets, preset;
      std::optional<double> alpha;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--recipe", o->recipe, "Merge recipe JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--presets", o->presets, "Alpha presets JSON (default: built-in)")->check(CLI::ExistingFile);
    sub->add_option("--preset", o->preset, "Preset name (overrides the recipe)");
    sub->add_option("--alpha", o->alpha, "Scaling factor (overrides recipe and preset)");
    register_body(sub, "merge", common, [=](RunRecord& r, const CommonOptions&) {
      r.add_input("recipe", o->recipe);
      const fs::path recipe_path = o->recipe;
      auto recipe = MergeRecipe::from_json(json::parse(read_file(recipe_path)), recipe_path.parent_path());
      if (!o->preset.empty()) {
        recipe.preset = o->preset;
        recipe.alpha.reset();
      }
      if (o->alpha) recipe.alpha = *o->alpha;
      MergePresets presets = MergePresets::builtin();
      if (!o->presets.empty()) {
        r.add_input("presets", o->presets);
        presets = MergePresets::load(o->presets);
      }
      r.add_input("target", recipe.target);
      r.add_input("base", recipe.base);
      r.add_input("trained", recipe.trained);
      const auto summary = run_merge(recipe, presets);
      r.counts = {{"tensors", summary.tensors}, {"elements", summary.elements}};
      r.extra["alpha"] = summary.alpha;
      r.extra["output_sha256"] = sha256_hex(read_file(recipe.output_path));
    });
  }

  // evalagg ---------------------------------------------------------------------
  {
    auto* group = app.add_subcommand("evalagg", "Score predictions and aggregate benchmark results");
    group->require_subcommand(1);
    group->fallthrough();
    {
      auto [sub, common] = add_command(group, "aggregate", "Normalize scores and compute VA / LCA",
                                       "HTML report path; JSON and manifest are written beside it");
      common->out = "report.html";
      struct Opts {
        std::string scores, baseline;
      };
      auto o = std::make_shared<Opts>();
      sub->add_option("--scores", o->scores, "Score JSONL {checkpoint, benchmark, score, run_id?}")
          ->required()
          ->check(CLI::ExistingFile);
      sub->add_option("--baseline", o->baseline, "Checkpoint that deltas are measured against");
      register_body(sub, "evalagg aggregate", common, [=](RunRecord& r, const CommonOptions& c) {
        r.add_input("scores", o->scores);
        const auto registry = BenchmarkRegistry::defaults();
        const auto runs = tables_by_run(load_score_records(o->scores));
        // Across runs, each cell is the mean of the runs that report it.
        ScoreTable merged;
        std::map<std::string, std::map<std::string, int>> seen;
        for (const auto& [run, table] : runs) {
          for (const auto& [ckpt, row] : table) {
            for (const auto& [bench, v] : row) {
              merged[ckpt][bench] += v;
              ++seen[ckpt][bench];
            }
          }
        }
        for (auto& [ckpt, row] : merged) {
          for (auto& [bench, v] : row) v /= seen[ckpt][bench];
        }
        auto report = aggregate(normalize_scores(merged), registry,
                                o->baseline.empty() ? std::nullopt : std::optional(o->baseline));
        if (runs.size() >= 2) attach_run_variance(report, runs, registry);
        const fs::path html_path = c.out;
        auto json_path = html_path;
        json_path.replace_extension(".json");
        write_output(html_path, render_report_html(report));
        write_output(json_path, to_json(report).dump(2) + "\n");
        r.out_dir = html_path.has_parent_path() ? html_path.parent_path() : fs::path(".");
        r.counts = {{"checkpoints", report.rows.size()}, {"runs", runs.size()}};
      });
    }
    {
      auto [sub, common] = add_command(group, "anls", "Mean ANLS over prediction records");
      struct Opts {
        std::string predictions;
        double tau = 0.5;
      };
      auto o = std::make_shared<Opts>();
      sub->add_option("--predictions", o->predictions, "JSONL {prediction, answers: [...]}")
          ->required()
          ->check(CLI::ExistingFile);
      sub->add_option("--tau", o->tau)->capture_default_str()->check(CLI::Range(0.0, 1.0));
      register_body(sub, "evalagg anls", common, [=](RunRecord& r, const CommonOptions& c) {
        r.add_input("predictions", o->predictions);
        double total = 0.0;
        std::size_t n = 0;
        for_each_jsonl(o->predictions, [&](std::size_t line, const json& j) {
          try {
            std::vector<std::string> golds = j.contains("answers")
                                                 ? j.at("answers").get<std::vector<std::string>>()
                                                 : std::vector<std::string>{j.at("answer").get<std::string>()};
            total += anls(j.at("prediction").get<std::string>(), golds, o->tau);
            ++n;
          } catch (const json::exception& e) {
            throw std::runtime_error(fmt::format("{}:{}: {}", o->predictions, line, e.what()));
          }
        });
        const json result{{"anls", n == 0 ? 0.0 : total / static_cast<double>(n)}, {"count", n}};
        std::cout << result.dump(2) << "\n";
        write_output(fs::path(c.out) / "anls.json", result.dump(2) + "\n");
        r.counts = {{"predictions", n}};
      });
    }
  }

  // flag ------------------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "flag", "Flag benchmark items whose question or answer looks wrong");
    struct Opts {
      std::string items, corpus, store, extract_model = "extractor", verdict_model = "judge";
      std::size_t k = 3;
      bool expand = false;
      std::vector<std::string> expand_styles;
      ClientOptions client;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--items", o->items, "Benchmark items JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--corpus", o->corpus, "Corpus manifest JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--store", o->store, "Initialize a review store in this directory");
    sub->add_option("--k", o->k, "Pages shown to the verdict model")->capture_default_str();
    sub->add_option("--extract-model", o->extract_model)->capture_default_str();
    sub->add_option("--verdict-model", o->verdict_model)->capture_default_str();
    sub->add_flag("--expand-answers", o->expand, "Add not-answerable equivalents to accepted answers");
    sub->add_option("--expand-styles", o->expand_styles, "Restrict expansion to these question styles");
    o->client.add(sub);
    register_body(sub, "flag", common, [=](RunRecord& r, const CommonOptions& c) {
      r.add_input("items", o->items);
      const auto corpus = load_corpus(r, o->corpus, "");
      std::vector<BenchmarkItem> items;
      for_each_jsonl(o->items, [&](std::size_t, const json& j) { items.push_back(benchmark_item_from_json(j)); });
      auto client = o->client.make_client(r);
      FlagConfig fc;
      fc.extract_model = o->extract_model;
      fc.verdict_model = o->verdict_model;
      fc.k = o->k;
      fc.max_in_flight = o->client.max_in_flight;
      fc.run_id = fmt::format("flag-{:016x}", c.seed);
      std::vector<FlagReport> flags;
      std::map<std::string, std::size_t> by_issue;
      for (const auto& item : items) {
        auto report = flag_item(item, corpus.document(item.doc_id), *client, *client, fc);
        if (report.issue_kind == IssueKind::ok) continue;
        ++by_issue[to_string(report.issue_kind)];
        flags.push_back(std::move(report));
      }
      std::vector<json> records;
      for (const auto& f : flags) records.push_back(to_json(f));
      write_output(fs::path(c.out) / "flags.jsonl", to_jsonl(records));
      if (!o->store.empty()) {
        if (o->expand) {
          ExpansionConfig ec;
          if (!o->expand_styles.empty()) {
            ec.styles = std::set<std::string>(o->expand_styles.begin(), o->expand_styles.end());
          }
          for (auto& item : items) item = expand_accepted_answers(std::move(item), ec);
        }
        fs::create_directories(o->store);
        ReviewStore::initialize(o->store, items, flags, fs::path(o->corpus));
      }
      r.counts = {{"items", items.size()}, {"flagged", flags.size()}, {"by_issue", by_issue}};
    });
  }

  // review-serve ----------------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "review-serve", "Serve the review REST API over a review store");
    struct Opts {
      std::string store, static_dir, bind, note;
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--store", o->store, "Review store directory")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--static", o->static_dir, "UI asset directory served at /")->check(CLI::ExistingDirectory);
    sub->add_option("--bind", o->bind, "host:port (default: REVIEW_BIND_ADDR or 127.0.0.1:8080)");
    sub->add_option("--provenance-note", o->note, "X-Provenance-Note header for exports");
    register_body(sub, "review-serve", common, [=](RunRecord& r, const CommonOptions&) {
      ReviewStore store(o->store);
      if (!o->note.empty()) store.set_provenance_note(o->note);
      const auto addr = o->bind.empty() ? BindAddress::from_env() : BindAddress::parse(o->bind);
      ReviewServer server(store, o->static_dir.empty() ? std::nullopt
                                                       : std::optional<fs::path>(o->static_dir));
      const int port = server.bind(addr);
      r.counts = to_json(store.stats());
      r.extra["bind"] = fmt::format("{}:{}", addr.host, port);
      write_manifest(r);
      spdlog::info("review service listening on http://{}:{}", addr.host, port);

      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      sigset_t previous;
      pthread_sigmask(SIG_BLOCK, &signals, &previous);
      std::thread listener([&server] { server.listen(); });
      int received = 0;
      sigwait(&signals, &received);
      spdlog::info("signal {} received, shutting down", received);
      server.stop();
      listener.join();
      pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    });
  }

  // export-leaderboard ----------------------------------------------------------
  {
    auto [sub, common] = add_command(&app, "export-leaderboard", "Render the checkpoint leaderboard");
    struct Opts {
      std::string records, format = "html";
    };
    auto o = std::make_shared<Opts>();
    sub->add_option("--records", o->records, "Leaderboard JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember({"json", "html"}));
    register_body(sub, "export-leaderboard", common, [=](RunRecord& r, const CommonOptions& c) {
      r.add_input("records", o->records);
      const auto records = load_leaderboard_records(o->records);
      const auto text = export_leaderboard(records, leaderboard_format_from_string(o->format));
      write_output(fs::path(c.out) / fmt::format("leaderboard.{}", o->format), text);
      r.counts = {{"records", records.size()}};
    });
  }

  // Parse ------------------------------------------------------------------------
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    while (!target->get_subcommands().empty()) target = target->get_subcommands().front();
    std::cout << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    std::cout << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const CLI::App* target = &app;
    while (!target->get_subcommands().empty()) target = target->get_subcommands().front();
    std::cerr << "error: " << e.what() << "\n\n" << target->help();
    return kExitUsage;
  }

  auto logger = spdlog::get("lcdoc");
  if (!logger) logger = spdlog::stderr_color_mt("lcdoc");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  const Command* selected = nullptr;
  for (const auto& cmd : commands) {
    if (cmd.app->parsed()) selected = &cmd;
  }
  if (selected == nullptr) {
    std::cerr << app.help();
    return kExitUsage;
  }

  RunRecord record;
  record.command = selected->name;
  record.config = resolved_config(*selected->app);
  const auto* out_opt = selected->app->get_option("--out");
  const auto* seed_opt = selected->app->get_option("--seed");
  record.out_dir = out_opt->as<std::string>();
  record.seed = seed_opt->as<std::uint64_t>();
  try {
    selected->body(record);
    if (record.command != "review-serve") write_manifest(record);
  } catch (const std::exception& e) {
    spdlog::error("{} failed: {}", record.command, e.what());
    return kExitPipeline;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace lcdoc::cli
