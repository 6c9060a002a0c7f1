#include "clarify/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "clarify/checkpoint.hpp"
#include "clarify/data.hpp"
#include "clarify/ensemble.hpp"
#include "clarify/errors.hpp"
#include "clarify/evaluation.hpp"
#include "clarify/rtd.hpp"
#include "clarify/synthetic.hpp"
#include "clarify/text.hpp"
#include "clarify/training.hpp"

namespace clarify::cli {

namespace fs = std::filesystem;

namespace {

// Keys left out of the echoed config: they name where outputs go, not what
// is computed.
const std::set<std::string> kUnechoedKeys = {"out", "force", "config"};

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw InputError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw InputError("output directory " + dir.string() +
                       " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void prepare_output_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) {
    throw InputError("output file " + file.string() + " exists; pass --force to overwrite");
  }
}

std::string ini_key(const std::string& line) {
  const auto eq = line.find('=');
  return std::string(trim(line.substr(0, eq)));
}

/// Effective configuration as key=value lines, without output locations.
std::string echo_config(const CLI::App& app) {
  std::string out;
  for (const auto& line : split(app.config_to_str(true, false), '\n')) {
    if (line.empty() || kUnechoedKeys.count(ini_key(line)) > 0) continue;
    // List defaults come back quoted and compact, while lists read from a
    // config file come back bare with spaces. Write one form so reruns hash alike.
    auto value = line.substr(line.find('=') + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"' && value[1] == '[')
      value = value.substr(1, value.size() - 2);
    if (!value.empty() && value.front() == '[')
      value.erase(std::remove(value.begin(), value.end(), ' '), value.end());
    out += ini_key(line) + "=" + value + "\n";
  }
  return out;
}

/// Replaces (or appends) values in an echoed config.
std::string override_config(const std::string& text, const std::map<std::string, std::string>& set) {
  std::string out;
  std::set<std::string> seen;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto key = ini_key(line);
    const auto it = set.find(key);
    if (it != set.end()) {
      out += key + "=" + it->second + "\n";
      seen.insert(key);
    } else {
      out += line + "\n";
    }
  }
  for (const auto& [key, value] : set) {
    if (seen.count(key) == 0) out += key + "=" + value + "\n";
  }
  return out;
}

/// Rounds to 12 significant digits so that e.g. 9e-6 * 100 prints as 9e-4.
double tidy(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::scientific, 11);
  return parse_double(std::string(buf, res.ptr));
}

std::string sha_of_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------- gen-synth

struct GenSynthArgs {
  std::string out;
  bool force = false;
  std::uint64_t seed = 7;
  std::size_t n_sentences = 20000;
  std::size_t min_len = 6;
  std::size_t max_len = 32;
  std::size_t vocab_size = 512;
  std::size_t n_classes = 6;
  std::size_t verbs_per_class = 4;
  std::size_t nouns_per_class = 6;
  std::size_t train_per_pattern = 200;
  std::size_t dev_per_pattern = 50;
  std::size_t test_per_pattern = 50;
  double label_skew = 0.0;
};

void add_gen_synth_options(CLI::App& app, GenSynthArgs& a) {
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_flag("--force", a.force, "Overwrite a non-empty output directory");
  app.add_option("--seed", a.seed, "Seed for grammar, corpus and task")->capture_default_str();
  app.add_option("--n-sentences", a.n_sentences, "Corpus sentences")->capture_default_str();
  app.add_option("--min-len", a.min_len, "Minimum sentence length")->capture_default_str();
  app.add_option("--max-len", a.max_len, "Maximum sentence length")->capture_default_str();
  app.add_option("--vocab-size", a.vocab_size, "Vocabulary budget")->capture_default_str();
  app.add_option("--n-classes", a.n_classes, "Semantic classes")->capture_default_str();
  app.add_option("--verbs-per-class", a.verbs_per_class, "Verbs per class")->capture_default_str();
  app.add_option("--nouns-per-class", a.nouns_per_class, "Nouns per class")->capture_default_str();
  app.add_option("--train-per-pattern", a.train_per_pattern, "Training instances per pattern")
      ->capture_default_str();
  app.add_option("--dev-per-pattern", a.dev_per_pattern, "Dev instances per pattern")
      ->capture_default_str();
  app.add_option("--test-per-pattern", a.test_per_pattern, "Test instances per pattern")
      ->capture_default_str();
  app.add_option("--label-skew", a.label_skew, "0 = balanced labels, 1 = pattern-specific skew")
      ->capture_default_str();
}

void write_split(const fs::path& dir, const std::string& name, const SyntheticSplit& split,
                 std::vector<std::pair<std::string, std::size_t>>& manifest) {
  std::vector<std::pair<std::string, Label>> labels;
  std::vector<std::pair<std::string, double>> scores;
  for (const auto& inst : split.instances) {
    for (std::size_t f = 1; f <= kFillersPerInstance; ++f) {
      const auto id = example_id(inst.id, f);
      labels.emplace_back(id, split.labels.at(id));
      scores.emplace_back(id, split.scores.at(id));
    }
  }
  write_file(dir / (name + ".tsv"), format_instances(split.instances));
  write_file(dir / (name + "_labels.tsv"), format_labels(labels));
  write_file(dir / (name + "_scores.tsv"), format_scores(scores));
  manifest.emplace_back(name + ".tsv", split.instances.size());
  manifest.emplace_back(name + "_labels.tsv", labels.size());
  manifest.emplace_back(name + "_scores.tsv", scores.size());
}

int cmd_gen_synth(const GenSynthArgs& a, const CLI::App& app, std::ostream& out) {
  GrammarConfig grammar;
  grammar.n_classes = a.n_classes;
  grammar.verbs_per_class = a.verbs_per_class;
  grammar.nouns_per_class = a.nouns_per_class;
  grammar.seed = a.seed;
  SyntheticCorpusConfig corpus_config;
  corpus_config.n_sentences = a.n_sentences;
  corpus_config.min_len = a.min_len;
  corpus_config.max_len = a.max_len;
  corpus_config.vocab_size = a.vocab_size;
  corpus_config.seed = a.seed;
  SyntheticTaskConfig task_config;
  task_config.train_per_pattern = a.train_per_pattern;
  task_config.dev_per_pattern = a.dev_per_pattern;
  task_config.test_per_pattern = a.test_per_pattern;
  task_config.label_skew = a.label_skew;
  task_config.seed = a.seed;
  if (!(a.label_skew >= 0.0 && a.label_skew <= 1.0)) {
    throw ConfigError("label-skew must be in [0, 1]");
  }

  const Lexicon lexicon(grammar);
  const auto words = generate_corpus_words(corpus_config, lexicon);
  const auto task = generate_synthetic_task(task_config, lexicon);
  const auto vocab =
      Vocabulary::build(vocabulary_texts(words, task.train.instances), corpus_config.vocab_size);
  const auto corpus = generate_corpus(corpus_config, lexicon, vocab);

  const fs::path dir(a.out);
  prepare_output_dir(dir, a.force);
  std::vector<std::pair<std::string, std::size_t>> manifest;
  write_file(dir / "corpus.txt", format_corpus(corpus));
  manifest.emplace_back("corpus.txt", corpus.size());
  write_file(dir / "vocab.txt", vocab.serialize());
  manifest.emplace_back("vocab.txt", vocab.size());
  write_split(dir, "train", task.train, manifest);
  write_split(dir, "dev", task.dev, manifest);
  write_split(dir, "test", task.test, manifest);

  const auto patterns = example_patterns(task.train.instances);
  write_file(dir / "train_label_distribution.tsv",
             label_distribution_tsv(label_distribution(task.train.labels, patterns)));

  std::string manifest_text = "seed\t" + std::to_string(a.seed) + "\nfile\tcount\tsha256\n";
  for (const auto& [file, count] : manifest) {
    manifest_text += file + "\t" + std::to_string(count) + "\t" + sha_of_file(dir / file) + "\n";
  }
  write_file(dir / "manifest.tsv", manifest_text);
  write_file(dir / "config.ini", echo_config(app));

  out << "wrote " << corpus.size() << " corpus sentences, vocabulary of " << vocab.size()
      << ", " << task.train.instances.size() << "/" << task.dev.instances.size() << "/"
      << task.test.instances.size() << " train/dev/test instances to " << dir.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- pretrain

struct PretrainArgs {
  std::string corpus, vocab, out;
  bool force = false;
  PretrainConfig config;
  std::string activation = "gelu";
};

void add_backbone_options(CLI::App& app, BackboneConfig& b) {
  app.add_option("--d-model", b.d_model, "Hidden width")->capture_default_str();
  app.add_option("--n-layers", b.n_layers, "Encoder layers")->capture_default_str();
  app.add_option("--n-heads", b.n_heads, "Attention heads")->capture_default_str();
  app.add_option("--d-ff", b.d_ff, "Feed-forward width")->capture_default_str();
  app.add_option("--max-seq-len", b.max_seq_len, "Longest input sequence")->capture_default_str();
  app.add_option("--dropout", b.dropout_p, "Dropout probability")->capture_default_str();
}

void add_pretrain_options(CLI::App& app, PretrainArgs& a) {
  auto& c = a.config;
  app.add_option("--corpus", a.corpus, "Token-id corpus, one sentence per line")->required();
  app.add_option("--vocab", a.vocab, "Vocabulary file (sets the vocabulary size)")->required();
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_flag("--force", a.force, "Overwrite a non-empty output directory");
  app.add_option("--seed", c.seed, "Run seed")->capture_default_str();
  app.add_option("--steps", c.steps, "Optimizer steps")->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Sentences per step")->capture_default_str();
  app.add_option("--lr", c.learning_rate, "Peak learning rate")->capture_default_str();
  app.add_option("--warmup-ratio", c.warmup_ratio, "Warmup fraction")->capture_default_str();
  app.add_option("--weight-decay", c.weight_decay, "AdamW weight decay")->capture_default_str();
  app.add_option("--mask-rate", c.mask_rate, "Fraction of tokens replaced")->capture_default_str();
  app.add_option("--rtd-weight", c.rtd_weight, "Discriminator loss weight")->capture_default_str();
  app.add_option("--clip-norm", c.clip_norm, "Gradient norm bound, 0 = off")->capture_default_str();
  app.add_option("--heldout", c.heldout_sentences, "Held-out sentences")->capture_default_str();
  add_backbone_options(app, c.backbone);
  app.add_option("--gen-d-model", c.generator.d_model, "Generator width")->capture_default_str();
  app.add_option("--gen-n-layers", c.generator.n_layers, "Generator layers")->capture_default_str();
  app.add_option("--gen-n-heads", c.generator.n_heads, "Generator heads")->capture_default_str();
  app.add_option("--gen-d-ff", c.generator.d_ff, "Generator feed-forward width")
      ->capture_default_str();
  app.add_option("--lm-head-activation", a.activation, "tanh, gelu or sigmoid")
      ->capture_default_str();
}

std::string rtd_report_tsv(const PretrainReport& r) {
  std::string out = "metric\tvalue\n";
  out += "heldout_tokens\t" + std::to_string(r.final.tokens) + "\n";
  out += "replaced_fraction\t" + format_double(r.replaced_fraction) + "\n";
  out += "initial_accuracy\t" + format_double(r.initial.accuracy) + "\n";
  out += "initial_loss\t" + format_double(r.initial.loss) + "\n";
  out += "final_accuracy\t" + format_double(r.final.accuracy) + "\n";
  out += "final_loss\t" + format_double(r.final.loss) + "\n";
  out += "majority_accuracy\t" + format_double(r.majority_accuracy) + "\n";
  out += "majority_loss\t" + format_double(r.majority_loss) + "\n";
  return out;
}

int cmd_pretrain(PretrainArgs& a, const CLI::App& app, std::ostream& out) {
  a.config.lm_head_activation = parse_activation(a.activation);
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  a.config.backbone.vocab_size = vocab.size();
  a.config.validate();
  const auto corpus = load_corpus(a.corpus);

  const fs::path dir(a.out);
  prepare_output_dir(dir, a.force);
  const std::string config_text = echo_config(app);
  const std::string config_hash =
      sha256_hex(config_text + "corpus_sha256=" + sha_of_file(a.corpus) + "\n");
  auto result = pretrain(corpus, a.config, config_hash);
  result.checkpoint.header["vocab_sha256"] = sha_of_file(a.vocab);

  save_checkpoint(dir / "checkpoint.ckpt", result.checkpoint);
  write_file(dir / "train.log", "step\tlr\tloss\tmlm_loss\trtd_loss\n" + result.log);
  write_file(dir / "report.tsv", rtd_report_tsv(result.report));
  write_file(dir / "config.ini", config_text);

  const auto& r = result.report;
  out << "held-out RTD accuracy " << format_double(r.final.accuracy) << " (initial "
      << format_double(r.initial.accuracy) << ", majority " << format_double(r.majority_accuracy)
      << "); loss " << format_double(r.final.loss) << " per token (majority bound "
      << format_double(r.majority_loss) << ")\n";
  return kExitOk;
}

// ----------------------------------------------------------------- finetune

struct FinetuneArgs {
  std::string checkpoint, vocab, train, train_gold, dev, dev_gold, out;
  std::string task = "classification";
  bool force = false;
  TrainConfig config;
  double lr_scale = 1.0;
  bool grid = false;
  std::vector<double> grid_lr{kLearningRateGrid.begin(), kLearningRateGrid.end()};
  std::vector<std::size_t> grid_batch{kBatchSizeGrid.begin(), kBatchSizeGrid.end()};
  std::size_t jobs = 1;
};

void add_finetune_options(CLI::App& app, FinetuneArgs& a) {
  auto& c = a.config;
  app.add_option("--checkpoint", a.checkpoint, "Pre-trained checkpoint")->required();
  app.add_option("--vocab", a.vocab, "Vocabulary file")->required();
  app.add_option("--train", a.train, "Training instances TSV")->required();
  app.add_option("--train-gold", a.train_gold, "Training labels (A) or scores (B)")->required();
  app.add_option("--dev", a.dev, "Dev instances TSV")->required();
  app.add_option("--dev-gold", a.dev_gold, "Dev labels (A) or scores (B)")->required();
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_flag("--force", a.force, "Overwrite a non-empty output directory");
  app.add_option("--task", a.task, "classification (A) or regression (B)")->capture_default_str();
  app.add_option("--lr", c.learning_rate, "Peak learning rate")->capture_default_str();
  app.add_option("--lr-scale", a.lr_scale, "Multiplier applied to every learning rate")
      ->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Examples per step")->capture_default_str();
  app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app.add_option("--warmup-ratio", c.warmup_ratio, "Warmup fraction")->capture_default_str();
  app.add_option("--weight-decay", c.weight_decay, "AdamW weight decay")->capture_default_str();
  app.add_option("--dropout", c.dropout_p, "Dropout probability")->capture_default_str();
  app.add_option("--seed", c.seed, "Run seed")->capture_default_str();
  // CLI11 does not capture flag defaults, and the echoed config would
  // otherwise say false.
  app.add_flag("--lm-head-reuse,!--no-lm-head-reuse", c.lm_head_reuse,
               "Keep the pre-trained LM head between backbone and pooling")
      ->default_str(c.lm_head_reuse ? "true" : "false");
  app.add_flag("--freeze-lm-head", c.freeze_lm_head, "Do not update the LM head")
      ->capture_default_str();
  app.add_option("--clip-norm", c.clip_norm, "Gradient norm bound, 0 = off")->capture_default_str();
  app.add_flag("--grid", a.grid, "Run every learning-rate x batch-size combination")
      ->capture_default_str();
  app.add_option("--grid-lr", a.grid_lr, "Learning rates for --grid")->capture_default_str();
  app.add_option("--grid-batch", a.grid_batch, "Batch sizes for --grid")->capture_default_str();
  app.add_option("--jobs", a.jobs, "Concurrent grid runs")->capture_default_str();
}

struct Dataset {
  std::vector<FilledExample> train, dev;
};

std::vector<FilledExample> load_split(const std::string& instances_path, const std::string& gold_path,
                                      Task task, const Vocabulary& vocab, std::size_t max_len) {
  const auto instances = load_instances(instances_path);
  if (task == Task::classification) {
    const auto labels = load_labels(gold_path);
    return expand(instances, vocab, max_len, &labels, nullptr);
  }
  const auto scores = load_scores(gold_path);
  return expand(instances, vocab, max_len, nullptr, &scores);
}

Vocabulary load_matching_vocab(const std::string& path, const Checkpoint& ckpt) {
  Vocabulary vocab = Vocabulary::load(path);
  const auto expected = backbone_from_header(ckpt).vocab_size;
  if (vocab.size() != expected) {
    throw ConfigError("vocabulary " + path + " has " + std::to_string(vocab.size()) +
                      " entries but the checkpoint expects " + std::to_string(expected));
  }
  if (ckpt.has("vocab_sha256") && ckpt.get("vocab_sha256") != sha_of_file(path)) {
    throw ConfigError("vocabulary " + path + " differs from the one used for pre-training");
  }
  return vocab;
}

struct RunSpec {
  std::string name;
  TrainConfig config;
  fs::path dir;
  std::string config_text;
};

std::string history_tsv(const FinetuneResult& r, Task task) {
  std::string out = std::string("epoch\tmean_train_loss\tdev_") +
                    (task == Task::classification ? "accuracy" : "spearman") + "\n";
  for (const auto& h : r.history) {
    out += std::to_string(h.epoch) + "\t" + format_double(h.mean_train_loss) + "\t" +
           (std::isnan(h.dev_metric) ? "undefined" : format_double(h.dev_metric)) + "\n";
  }
  return out;
}

int cmd_finetune(FinetuneArgs& a, const CLI::App& app, std::ostream& out) {
  a.config.task = parse_task(a.task);
  if (!(a.lr_scale > 0.0)) throw ConfigError("lr-scale must be positive");
  if (a.jobs == 0) throw ConfigError("jobs must be at least 1");

  const Checkpoint pretrained = load_checkpoint(a.checkpoint);
  const Vocabulary vocab = load_matching_vocab(a.vocab, pretrained);
  const BackboneConfig arch = backbone_from_header(pretrained);
  Dataset data;
  data.train = load_split(a.train, a.train_gold, a.config.task, vocab, arch.max_seq_len);
  data.dev = load_split(a.dev, a.dev_gold, a.config.task, vocab, arch.max_seq_len);

  const std::string base_config = echo_config(app);
  const std::string inputs = "checkpoint_sha256=" + sha_of_file(a.checkpoint) +
                             "\ntrain_sha256=" + sha_of_file(a.train) +
                             "\ntrain_gold_sha256=" + sha_of_file(a.train_gold) +
                             "\ndev_sha256=" + sha_of_file(a.dev) +
                             "\ndev_gold_sha256=" + sha_of_file(a.dev_gold) + "\n";

  const fs::path root(a.out);
  prepare_output_dir(root, a.force);
  std::vector<RunSpec> runs;
  if (a.grid) {
    if (a.grid_lr.empty() || a.grid_batch.empty()) throw ConfigError("empty grid");
    for (double lr : a.grid_lr) {
      for (std::size_t bsz : a.grid_batch) {
        RunSpec run;
        run.config = a.config;
        run.config.learning_rate = tidy(lr * a.lr_scale);
        run.config.batch_size = bsz;
        run.name = run_dir_name(run.config.learning_rate, bsz);
        // Each grid run draws from its own seed, derived from the base seed
        // and the run name; the derived value is echoed for reruns.
        run.config.seed = splitmix64(a.config.seed ^ fnv1a64(run.name));
        run.dir = root / run.name;
        run.config_text = override_config(
            base_config,
            {{"lr", format_double(run.config.learning_rate)},
             {"lr-scale", "1"},
             {"batch-size", std::to_string(bsz)},
             {"seed", std::to_string(run.config.seed)},
             {"grid", "false"},
             {"jobs", "1"}});
        runs.push_back(std::move(run));
      }
    }
  } else {
    RunSpec run;
    run.config = a.config;
    run.config.learning_rate = tidy(a.config.learning_rate * a.lr_scale);
    run.name = run_dir_name(run.config.learning_rate, run.config.batch_size);
    run.dir = root;
    run.config_text = base_config;
    runs.push_back(std::move(run));
  }
  for (const auto& run : runs) run.config.validate();

  struct Outcome {
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
    double seconds = 0.0;
    std::exception_ptr error;
  };
  std::vector<Outcome> outcomes(runs.size());
  auto execute = [&](std::size_t i) {
    try {
      const auto& run = runs[i];
      const auto start = std::chrono::steady_clock::now();
      auto result = finetune(&pretrained, arch, data.train, data.dev, run.config);
      fs::create_directories(run.dir);
      const std::string hash = sha256_hex(run.config_text + inputs);
      auto ckpt = make_plausibility_checkpoint(*result.model, run.config, hash);
      if (pretrained.has("vocab_sha256")) ckpt.header["vocab_sha256"] = pretrained.get("vocab_sha256");
      save_checkpoint(run.dir / "checkpoint.ckpt", ckpt);
      write_file(run.dir / "train.log", "step\tlr\tloss\tloss_sum\n" + result.log);
      write_file(run.dir / "history.tsv", history_tsv(result, run.config.task));
      write_file(run.dir / "config.ini", run.config_text);
      outcomes[i].best_epoch = result.best_epoch;
      outcomes[i].best_metric = result.best_dev_metric;
      outcomes[i].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } catch (...) {
      outcomes[i].error = std::current_exception();
    }
  };

  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(a.jobs, runs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) execute(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) execute(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
  }

  const std::string metric = a.config.task == Task::classification ? "accuracy" : "spearman";
  std::string summary = "run\tlr\tbatch_size\tseed\tbest_epoch\tdev_" + metric + "\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    const auto& o = outcomes[i];
    const std::string value = std::isnan(o.best_metric) ? "undefined" : format_double(o.best_metric);
    summary += run.name + "\t" + format_double(run.config.learning_rate) + "\t" +
               std::to_string(run.config.batch_size) + "\t" + std::to_string(run.config.seed) +
               "\t" + std::to_string(o.best_epoch) + "\t" + value + "\n";
    out << run_label(run.config.learning_rate, run.config.batch_size) << ": best dev " << metric
        << " " << value << " at epoch " << o.best_epoch << " (" << std::fixed
        << std::setprecision(1) << o.seconds << std::defaultfloat << " s)\n";
  }
  if (a.grid) write_file(root / "grid.tsv", summary);
  return kExitOk;
}

// ------------------------------------------------------------------ predict

struct PredictArgs {
  std::string checkpoint, vocab, instances, out;
  bool force = false;
};

void add_predict_options(CLI::App& app, PredictArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "Fine-tuned checkpoint")->required();
  app.add_option("--vocab", a.vocab, "Vocabulary file")->required();
  app.add_option("--instances", a.instances, "Instances TSV")->required();
  app.add_option("--out", a.out, "Prediction TSV; its stem is the model id")->required();
  app.add_flag("--force", a.force, "Overwrite an existing prediction file");
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto model = model_from_checkpoint(ckpt);
  const Vocabulary vocab = load_matching_vocab(a.vocab, ckpt);
  const auto instances = load_instances(a.instances);
  const auto examples = expand(instances, vocab, model->config().backbone.max_seq_len);
  const fs::path path(a.out);
  prepare_output_file(path, a.force);

  const auto predictions = predict(*model, examples);
  std::vector<PredictionEntry> entries;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    PredictionEntry e;
    e.id = examples[i].id;
    e.pattern = examples[i].pattern;
    if (predictions.task == Task::classification) {
      e.probs = predictions.probs[i];
    } else {
      e.score = predictions.scores[i];
    }
    entries.push_back(e);
  }
  const auto set = make_prediction_set(path.stem().string(), predictions.task, std::move(entries));
  write_file(path, format_prediction_set(set));
  out << "wrote " << set.entries.size() << " " << task_name(set.task) << " predictions to "
      << path.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- ensemble

struct EnsembleArgs {
  std::vector<std::string> dev_predictions, test_predictions;
  std::string dev_instances, test_instances, dev_gold, out;
  std::string mode = "select_top1";
  std::size_t k = 1;
  bool force = false;
};

void add_ensemble_options(CLI::App& app, EnsembleArgs& a) {
  app.add_option("--test-predictions", a.test_predictions, "Test prediction TSVs, one per model")
      ->required();
  app.add_option("--test-instances", a.test_instances, "Test instances TSV")->required();
  app.add_option("--dev-predictions", a.dev_predictions, "Dev prediction TSVs, one per model");
  app.add_option("--dev-instances", a.dev_instances, "Dev instances TSV");
  app.add_option("--dev-gold", a.dev_gold, "Dev labels (A) or scores (B)");
  app.add_option("--mode", a.mode, "standard, select_top1 or mean_topk")->capture_default_str();
  app.add_option("--k", a.k, "Members per pattern for mean_topk")->capture_default_str();
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_flag("--force", a.force, "Overwrite a non-empty output directory");
}

std::vector<PredictionSet> load_sets(const std::vector<std::string>& paths,
                                     const std::map<std::string, Pattern>& patterns) {
  std::vector<PredictionSet> sets;
  for (const auto& p : paths) sets.push_back(load_prediction_set(p, patterns));
  return sets;
}

int cmd_ensemble(const EnsembleArgs& a, const CLI::App& app, std::ostream& out) {
  const auto test_patterns = example_patterns(load_instances(a.test_instances));
  const auto test_sets = load_sets(a.test_predictions, test_patterns);
  const fs::path dir(a.out);

  if (a.mode == "standard") {
    prepare_output_dir(dir, a.force);
    write_file(dir / "ensemble_test.tsv", format_prediction_set(standard_ensemble(test_sets)));
    if (!a.dev_predictions.empty()) {
      if (a.dev_instances.empty()) throw ConfigError("--dev-predictions needs --dev-instances");
      const auto dev_sets = load_sets(a.dev_predictions, example_patterns(load_instances(a.dev_instances)));
      write_file(dir / "ensemble_dev.tsv", format_prediction_set(standard_ensemble(dev_sets)));
    }
    write_file(dir / "config.ini", echo_config(app));
    out << "standard ensemble of " << test_sets.size() << " models written to " << dir.string()
        << "\n";
    return kExitOk;
  }

  const EnsembleMode mode = parse_ensemble_mode(a.mode);
  if (a.dev_predictions.empty() || a.dev_instances.empty() || a.dev_gold.empty()) {
    throw ConfigError("pattern-aware ensembling needs --dev-predictions, --dev-instances and "
                      "--dev-gold");
  }
  const auto dev_patterns = example_patterns(load_instances(a.dev_instances));
  const auto dev_sets = load_sets(a.dev_predictions, dev_patterns);
  Gold gold;
  if (dev_sets.front().task == Task::classification) {
    gold.labels = load_labels(a.dev_gold);
  } else {
    gold.scores = load_scores(a.dev_gold);
  }
  const auto result = pattern_aware_ensemble(dev_sets, gold, test_sets, mode, a.k);

  prepare_output_dir(dir, a.force);
  write_file(dir / "ensemble_test.tsv", format_prediction_set(result.test));
  write_file(dir / "ensemble_dev.tsv", format_prediction_set(result.dev));
  write_file(dir / "audit.txt", format_spec_audit(result.spec));
  write_file(dir / "config.ini", echo_config(app));

  const std::string metric = result.spec.task == Task::classification ? "accuracy" : "spearman";
  out << "pattern-aware ensemble (" << a.mode << ") over " << dev_sets.size() << " models\n";
  for (const auto& set : dev_sets) {
    out << "  dev " << metric << " " << set.model_id << ": "
        << format_double(overall_metric(set, gold)) << "\n";
  }
  std::vector<PredictionSet> standard_input(dev_sets.begin(), dev_sets.end());
  out << "  dev " << metric << " standard ensemble: "
      << format_double(overall_metric(standard_ensemble(standard_input), gold)) << "\n";
  out << "  dev " << metric << " pattern-aware: " << format_double(overall_metric(result.dev, gold))
      << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string predictions, instances, gold, out;
  bool force = false;
};

void add_evaluate_options(CLI::App& app, EvaluateArgs& a) {
  app.add_option("--predictions", a.predictions, "Prediction TSV")->required();
  app.add_option("--instances", a.instances, "Instances TSV")->required();
  app.add_option("--gold", a.gold, "Gold labels (A) or scores (B)")->required();
  app.add_option("--out", a.out, "Output directory for the report files");
  app.add_flag("--force", a.force, "Overwrite a non-empty output directory");
}

int cmd_evaluate(const EvaluateArgs& a, const CLI::App& app, std::ostream& out) {
  const auto patterns = example_patterns(load_instances(a.instances));
  const auto set = load_prediction_set(a.predictions, patterns);
  Gold gold;
  MetricReport report;
  LabelDistribution distribution;
  if (set.task == Task::classification) {
    gold.labels = load_labels(a.gold);
    report = per_pattern_report(set.labels(), gold.labels, patterns);
    distribution = label_distribution(gold.labels, patterns);
  } else {
    gold.scores = load_scores(a.gold);
    report = per_pattern_report(set.scores(), gold.scores, patterns);
    LabelMap derived;
    for (const auto& [id, score] : gold.scores) derived.emplace(id, label_from_score(score));
    distribution = label_distribution(derived, patterns);
  }
  const std::string table = report_table(report);
  out << table;
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    prepare_output_dir(dir, a.force);
    write_file(dir / "report.tsv", report_tsv(report));
    write_file(dir / "report.txt", table);
    write_file(dir / "label_distribution.tsv", label_distribution_tsv(distribution));
    write_file(dir / "config.ini", echo_config(app));
  }
  return kExitOk;
}

const char* kUsage =
    "usage: clarify <command> [options]\n"
    "commands:\n"
    "  gen-synth   write a synthetic corpus and task dataset\n"
    "  pretrain    replaced-token-detection pre-training\n"
    "  finetune    fine-tune for classification or regression (optionally a grid)\n"
    "  predict     write predictions for an instances file\n"
    "  ensemble    standard or pattern-aware ensembling of prediction files\n"
    "  evaluate    accuracy / Spearman report with per-pattern breakdown\n"
    "Every command accepts --config FILE with key = value lines; run\n"
    "'clarify <command> --help' for its options.\n";

int dispatch(const std::string& command, std::vector<std::string> rest, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"clarify " + command, "clarify " + command};
  app.set_config("--config", "", "Read options from a key = value file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenSynthArgs gen;
  PretrainArgs pre;
  FinetuneArgs fin;
  PredictArgs pred;
  EnsembleArgs ens;
  EvaluateArgs eval;
  std::function<int()> action;
  if (command == "gen-synth") {
    add_gen_synth_options(app, gen);
    action = [&] { return cmd_gen_synth(gen, app, out); };
  } else if (command == "pretrain") {
    add_pretrain_options(app, pre);
    action = [&] { return cmd_pretrain(pre, app, out); };
  } else if (command == "finetune") {
    add_finetune_options(app, fin);
    action = [&] { return cmd_finetune(fin, app, out); };
  } else if (command == "predict") {
    add_predict_options(app, pred);
    action = [&] { return cmd_predict(pred, out); };
  } else if (command == "ensemble") {
    add_ensemble_options(app, ens);
    action = [&] { return cmd_ensemble(ens, app, out); };
  } else if (command == "evaluate") {
    add_evaluate_options(app, eval);
    action = [&] { return cmd_evaluate(eval, app, out); };
  } else {
    err << "unknown command '" << command << "'\n" << kUsage;
    return kExitInput;
  }

  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "clarify " << command << ": " << e.what() << "\n";
    return kExitInput;
  }
  return action();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << kUsage;
    return args.empty() ? kExitInput : kExitOk;
  }
  try {
    return dispatch(args[0], {args.begin() + 1, args.end()}, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace clarify::cli
