// Command-line front end: gen-data, train, decode, eval, diagnose.
//
// Settings are flat `section.key = value` pairs. Built-in defaults are
// overridden by --config files, which are overridden by flags (--set and the
// named shortcuts). Exit codes: 0 success, 2 usage/config error, 3 runtime
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gtr/config.hpp"
#include "gtr/corpus.hpp"
#include "gtr/decoding.hpp"
#include "gtr/diagnostics.hpp"
#include "gtr/errors.hpp"
#include "gtr/metrics.hpp"
#include "gtr/model.hpp"
#include "gtr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gtr::cli {
namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// ---------------------------------------------------------------- settings

struct Settings {
    KeyValues values;

    void merge(const KeyValues& kv) {
        for (const auto& [k, v] : kv) values[k] = v;
    }
    [[nodiscard]] bool has(const std::string& key) const { return values.contains(key); }
    [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    /// Keys under `prefix.`, with the prefix stripped.
    [[nodiscard]] KeyValues section(const std::string& prefix) const {
        KeyValues out;
        for (const auto& [k, v] : values) {
            if (k.rfind(prefix + ".", 0) == 0) out[k.substr(prefix.size() + 1)] = v;
        }
        return out;
    }
};

KeyValues parse_overrides(const std::vector<std::string>& items) {
    KeyValues kv;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

/// One config file may serve every command, so sections a command does not
/// read are ignored; keys outside the known sections are errors.
void reject_unknown(const Settings& s) {
    static const std::vector<std::string> known{"data", "model", "train", "run", "decode"};
    for (const auto& [k, v] : s.values) {
        const auto dot = k.find('.');
        const std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
        if (std::find(known.begin(), known.end(), sec) == known.end()) throw ConfigError("unknown setting '" + k + "'");
    }
}

SyntheticTaskSpec data_spec(const Settings& s) {
    SyntheticTaskSpec spec;
    for (const auto& [k, v] : s.section("data")) {
        if (k == "task") spec.task = parse_task(v);
        else if (k == "vocab_size") spec.vocab_size = parse_int(k, v);
        else if (k == "sentences_min") spec.sentences.min = parse_int(k, v);
        else if (k == "sentences_max") spec.sentences.max = parse_int(k, v);
        else if (k == "tokens_min") spec.tokens.min = parse_int(k, v);
        else if (k == "tokens_max") spec.tokens.max = parse_int(k, v);
        else if (k == "n_train") spec.n_train = parse_int(k, v);
        else if (k == "n_dev") spec.n_dev = parse_int(k, v);
        else if (k == "n_test") spec.n_test = parse_int(k, v);
        else if (k == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(k, v));
        else throw ConfigError("unknown setting data." + k);
    }
    spec.validate();
    return spec;
}

KeyValues spec_values(const SyntheticTaskSpec& spec) {
    return {{"data.task", std::string(to_string(spec.task))},
            {"data.vocab_size", std::to_string(spec.vocab_size)},
            {"data.sentences_min", std::to_string(spec.sentences.min)},
            {"data.sentences_max", std::to_string(spec.sentences.max)},
            {"data.tokens_min", std::to_string(spec.tokens.min)},
            {"data.tokens_max", std::to_string(spec.tokens.max)},
            {"data.n_train", std::to_string(spec.n_train)},
            {"data.n_dev", std::to_string(spec.n_dev)},
            {"data.n_test", std::to_string(spec.n_test)},
            {"data.seed", std::to_string(spec.seed)}};
}

KeyValues prefixed(const std::string& prefix, const KeyValues& kv) {
    KeyValues out;
    for (const auto& [k, v] : kv) out[prefix + "." + k] = v;
    return out;
}

// ---------------------------------------------------------------- manifest

class Manifest {
public:
    Manifest(std::string command, int argc, char** argv) : command_(std::move(command)) {
        for (int i = 0; i < argc; ++i) argv_.emplace_back(argv[i]);
        const std::time_t now = std::time(nullptr);
        std::ostringstream ts;
        ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
        started_ = ts.str();
    }

    void set_config(const KeyValues& kv) { config_ = kv; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void add(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write(const fs::path& dir) const {
        fs::create_directories(dir);
        json j;
        j["command"] = command_;
        j["argv"] = argv_;
        j["config"] = config_;
        if (seed_) j["seed"] = *seed_;
        j["git_revision"] = GTR_GIT_REVISION;
        j["started_at"] = started_;
        j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        for (const auto& [k, v] : extra_.items()) j[k] = v;
        std::ofstream out(dir / (command_ + ".manifest.json"));
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    std::string started_;
    KeyValues config_;
    std::optional<std::uint64_t> seed_;
    json extra_ = json::object();
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_resolved(const fs::path& dir, const KeyValues& kv) {
    std::ofstream out(dir / "config.resolved");
    out << "# resolved settings; pass back with --config to repeat this run\n" << format_key_values(kv);
}

// ---------------------------------------------------------------- commands

struct Common {
    std::vector<std::string> configs;
    std::vector<std::string> overrides;

    Settings load() const {
        Settings s;
        for (const auto& c : configs) s.merge(read_key_values(c));
        s.merge(parse_overrides(overrides));
        return s;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.configs, "key = value settings file (repeatable, later files win)");
    cmd->add_option("-s,--set", c.overrides, "override one setting, e.g. --set train.max_steps=200");
}

// gen-data ---------------------------------------------------------------

struct GenDataArgs {
    Common common;
    std::string out = "data";
    std::optional<std::string> task;
    std::optional<int> seed;
};

int gen_data(const GenDataArgs& a, Manifest& m) {
    Settings s = a.common.load();
    if (a.task) s.values["data.task"] = *a.task;
    if (a.seed) s.values["data.seed"] = std::to_string(*a.seed);
    reject_unknown(s);
    const SyntheticTaskSpec spec = data_spec(s);
    const Corpus corpus = generate(spec);
    write_corpus(a.out, corpus);
    write_resolved(a.out, spec_values(spec));
    m.set_config(spec_values(spec));
    m.set_seed(spec.seed);
    m.add("documents", {{"train", corpus.train.size()}, {"dev", corpus.dev.size()}, {"test", corpus.test.size()}});
    m.write(a.out);
    std::cout << "wrote " << corpus.train.size() << '/' << corpus.dev.size() << '/' << corpus.test.size()
              << " train/dev/test documents (" << to_string(spec.task) << ") to " << a.out << '\n';
    return 0;
}

// train ------------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string data = "data";
    std::string run_dir = "runs/train";
    std::optional<std::string> variant;
    std::optional<std::string> regime;
    std::optional<int> seed;
    std::optional<std::string> init_from;
    bool quiet = false;
};

int train_cmd(const TrainArgs& a, Manifest& m) {
    Settings s = a.common.load();
    if (a.variant) s.values["model.variant"] = *a.variant;
    if (a.regime) s.values["run.regime"] = *a.regime;
    if (a.seed) s.values["train.seed"] = std::to_string(*a.seed);
    reject_unknown(s);

    const Corpus corpus = read_corpus(a.data);
    KeyValues model_kv = s.section("model");
    if (!model_kv.contains("vocab_size")) model_kv["vocab_size"] = std::to_string(corpus.spec.vocab_size);

    ModelConfig probe;
    for (const auto& [k, v] : model_kv) {
        if (!set_model_field(probe, k, v)) throw ConfigError("unknown setting model." + k);
    }
    const Regime default_regime =
        probe.variant == Variant::baseline ? Regime::random_init_baseline : Regime::random_init_gtrans;
    const KeyValues run_kv = s.section("run");
    for (const auto& [k, v] : run_kv) {
        if (k != "regime" && k != "init_seed") throw ConfigError("unknown setting run." + k);
    }
    const Regime regime = run_kv.contains("regime") ? parse_regime(run_kv.at("regime")) : default_regime;
    if (!model_kv.contains("word_dropout")) model_kv["word_dropout"] = format_double(default_word_dropout(regime));
    const ModelConfig mc = model_config_from(model_kv);
    if (mc.vocab_size < corpus.spec.vocab_size) throw ConfigError("model.vocab_size is smaller than the corpus vocabulary");

    TrainConfig tc;
    for (const auto& [k, v] : s.section("train")) {
        if (!set_train_field(tc, k, v)) throw ConfigError("unknown setting train." + k);
    }
    tc.snapshot_dir = fs::path(a.run_dir);
    tc.validate();
    const auto init_seed =
        run_kv.contains("init_seed") ? static_cast<std::uint64_t>(parse_int("init_seed", run_kv.at("init_seed"))) : tc.seed;

    std::optional<TransferResult> transfer;
    Transformer model = [&] {
        if (regime != Regime::finetune_gtrans) return Transformer(mc, init_seed);
        if (!a.init_from) throw ConfigError("the finetune-gtrans regime needs --init-from <sentence checkpoint>");
        const Checkpoint sentence = load_checkpoint(*a.init_from);
        const Transformer fresh(mc, init_seed);
        transfer = transfer_from_sentence_model(sentence.params, fresh.params());
        return Transformer(mc, transfer->params);
    }();

    KeyValues resolved = prefixed("model", to_key_values(mc));
    resolved.merge(prefixed("train", to_key_values(tc)));
    resolved["run.regime"] = std::string(to_string(regime));
    resolved["run.init_seed"] = std::to_string(init_seed);
    fs::create_directories(a.run_dir);
    write_resolved(a.run_dir, resolved);
    m.set_config(resolved);
    m.set_seed(tc.seed);
    m.add("data", fs::absolute(a.data).string());
    m.add("data_seed", corpus.spec.seed);

    ProgressFn progress;
    if (!a.quiet) {
        progress = [](const LogRecord& r) {
            if (r.split == "valid" && (r.metric == "loss" || r.metric == "accuracy")) {
                std::cout << "step " << std::setw(6) << r.step << "  valid " << std::setw(8) << r.metric << ' '
                          << std::fixed << std::setprecision(4) << r.value << '\n';
            }
        };
    }
    const TrainResult result = train(model, corpus, regime, tc, transfer ? &transfer->partition : nullptr, progress);

    Checkpoint ck;
    ck.header = to_key_values(mc);
    ck.header["best_step"] = std::to_string(result.best_step);
    ck.params = result.best_params;
    save_checkpoint(fs::path(a.run_dir) / "model.ckpt", ck);
    ck.params = model.params();
    ck.header["best_step"] = std::to_string(result.steps_run);
    save_checkpoint(fs::path(a.run_dir) / "last.ckpt", ck);
    result.log.save(fs::path(a.run_dir) / "train_log.jsonl");

    m.add("result", {{"best_step", result.best_step},
                     {"best_valid_loss", result.best_valid_loss},
                     {"steps_run", result.steps_run},
                     {"early_stopped", result.early_stopped}});
    m.write(a.run_dir);
    std::cout << "best valid loss " << std::setprecision(6) << result.best_valid_loss << " at step "
              << result.best_step << "; checkpoint " << (fs::path(a.run_dir) / "model.ckpt").string() << '\n';
    return 0;
}

// decode -----------------------------------------------------------------

struct DecodeArgs {
    Common common;
    std::string checkpoint;
    std::string input;
    std::string output;
    std::optional<std::string> vocab;
    std::optional<std::string> alignment;
    std::optional<int> beam;
    std::optional<std::string> run_dir;
};

int decode_cmd(const DecodeArgs& a, Manifest& m) {
    Settings s = a.common.load();
    if (a.beam) s.values["decode.beam"] = std::to_string(*a.beam);
    reject_unknown(s);
    int beam = 5;
    LengthParams len;
    for (const auto& [k, v] : s.section("decode")) {
        if (k == "beam") beam = parse_int(k, v);
        else if (k == "len_a") len.a = parse_double(k, v);
        else if (k == "len_b") len.b = parse_double(k, v);
        else if (k == "alpha") len.alpha = parse_double(k, v);
        else throw ConfigError("unknown setting decode." + k);
    }
    if (beam < 1) throw ConfigError("decode.beam must be at least 1");

    Checkpoint ck = load_checkpoint(a.checkpoint);
    ck.header.erase("best_step");
    const ModelConfig mc = model_config_from(ck.header);
    const Transformer model(mc, std::move(ck.params));
    const Vocabulary vocab = a.vocab ? Vocabulary::load(*a.vocab) : Vocabulary(mc.vocab_size);
    const auto sources = read_documents(a.input, vocab);

    std::vector<TokenDocument> outputs;
    int truncated = 0;
    for (const auto& src : sources) {
        const DecodeResult r = beam_search_document(src, model, beam, len);
        truncated += r.truncated;
        outputs.push_back(r.document);
    }
    for (const auto* path : {&a.output, a.alignment ? &*a.alignment : nullptr}) {
        if (path != nullptr && fs::absolute(*path).has_parent_path()) fs::create_directories(fs::absolute(*path).parent_path());
    }
    write_documents(a.output, outputs, vocab);
    if (a.alignment) {
        std::ofstream out(*a.alignment);
        for (std::size_t d = 0; d < sources.size(); ++d) {
            const auto src_s = split_sentences(sources[d]);
            const auto hyp_s = split_sentences(outputs[d]);
            for (std::size_t i = 0; i < src_s.size(); ++i) {
                out << d << '\t' << i << '\t' << vocab.to_text(src_s[i]) << '\t'
                    << (i < hyp_s.size() ? vocab.to_text(hyp_s[i]) : std::string{}) << '\n';
            }
        }
    }
    m.set_config({{"decode.beam", std::to_string(beam)},
                  {"decode.len_a", format_double(len.a)},
                  {"decode.len_b", format_double(len.b)},
                  {"decode.alpha", format_double(len.alpha)}});
    m.add("checkpoint", fs::absolute(a.checkpoint).string());
    m.add("documents", sources.size());
    m.add("truncated", truncated);
    m.write(a.run_dir ? fs::path(*a.run_dir) : fs::absolute(a.output).parent_path());
    std::cout << "decoded " << sources.size() << " documents to " << a.output << '\n';
    return 0;
}

// eval -------------------------------------------------------------------

/// Reads documents of arbitrary whitespace-separated tokens; `<s>`/`</s>`
/// are sentence markers and every other string gets its own id.
std::vector<TokenDocument> read_text_documents(const fs::path& path, std::map<std::string, TokenId>& ids) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<TokenDocument> docs;
    for (std::string line; std::getline(in, line);) {
        TokenDocument d;
        std::istringstream words(line);
        for (std::string w; words >> w;) {
            if (w == "<s>") d.tokens.push_back(kSpecial.bos);
            else if (w == "</s>") d.tokens.push_back(kSpecial.eos);
            else if (w == "<pad>") d.tokens.push_back(kSpecial.pad);
            else d.tokens.push_back(ids.try_emplace(w, static_cast<TokenId>(ids.size() + 4)).first->second);
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

struct EvalArgs {
    std::string hyp;
    std::string ref;
    std::string level = "d";
    std::optional<std::string> run_dir;
};

int eval_cmd(const EvalArgs& a, Manifest& m) {
    std::map<std::string, TokenId> ids;
    const auto hyps = read_text_documents(a.hyp, ids);
    const auto refs = read_text_documents(a.ref, ids);
    const BleuReport report = a.level == "s" ? s_bleu(hyps, refs) : d_bleu(hyps, refs);
    std::cout << "{\"level\":\"" << a.level << "-bleu\",\"report\":" << report.to_json() << "}\n";
    std::cout << a.level << "-" << report.summary() << '\n';
    m.set_config({{"eval.level", a.level}});
    m.add("hyp", fs::absolute(a.hyp).string());
    m.add("ref", fs::absolute(a.ref).string());
    m.add("report", json::parse(report.to_json()));
    m.write(a.run_dir ? fs::path(*a.run_dir) : fs::absolute(a.hyp).parent_path());
    return 0;
}

// diagnose ---------------------------------------------------------------

struct DiagnoseArgs {
    std::string log;
    int window = 2;
    double tol = 0.1;
    double band = 0.2;
    int after = 0;
    std::optional<std::string> csv;
    std::optional<std::string> run_dir;
};

int diagnose_cmd(const DiagnoseArgs& a, Manifest& m) {
    const TrainLog log = TrainLog::load(a.log);
    const auto loss = log.series("valid", "loss");
    if (loss.empty()) throw std::runtime_error(a.log + " has no validation loss records");

    std::cout << "validation loss: " << loss.size() << " checkpoints, first " << loss.front().second << ", last "
              << loss.back().second << '\n';
    const auto plateaus = detect_plateau(loss, a.window, a.tol);
    if (plateaus.empty()) std::cout << "  no plateau (window " << a.window << ", tolerance " << a.tol << ")\n";
    json plateau_json = json::array();
    for (const auto& p : plateaus) {
        std::cout << "  plateau: steps " << p.start_step << " .. " << p.end_step << '\n';
        plateau_json.push_back({p.start_step, p.end_step});
    }

    std::map<std::string, std::vector<std::pair<int, double>>> entropy;
    for (const auto& r : log.records) {
        if (r.split == "valid" && r.metric.rfind("entropy/", 0) == 0) entropy[r.metric].emplace_back(r.step, r.value);
    }
    json trends = json::object();
    if (!entropy.empty()) std::cout << "attention entropy (bits):\n";
    for (const auto& [name, series] : entropy) {
        std::vector<double> tail;
        for (const auto& [step, v] : series) {
            if (step >= a.after) tail.push_back(v);
        }
        const bool mono = monotone_within(tail, a.band);
        std::cout << "  " << std::left << std::setw(34) << name.substr(8) << std::right << std::fixed
                  << std::setprecision(3) << series.front().second << " -> " << series.back().second
                  << (mono ? "  non-increasing" : "  rises") << " (band " << a.band << ")\n";
        trends[name] = {{"first", series.front().second}, {"last", series.back().second}, {"monotone", mono}};
    }

    if (a.csv) {
        std::ofstream out(*a.csv);
        out << "step,split,metric,value\n";
        for (const auto& r : log.records) out << r.step << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
    }
    m.set_config({{"diagnose.window", std::to_string(a.window)},
                  {"diagnose.tol", format_double(a.tol)},
                  {"diagnose.band", format_double(a.band)},
                  {"diagnose.after", std::to_string(a.after)}});
    m.add("log", fs::absolute(a.log).string());
    m.add("plateaus", plateau_json);
    m.add("entropy", trends);
    m.write(a.run_dir ? fs::path(*a.run_dir) : fs::absolute(a.log).parent_path());
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Group-tag document translation toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic parallel corpus");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("-o,--out", gen.out, "output directory")->capture_default_str();
    gen_cmd->add_option("--task", gen.task, "copy | substitution | reversal | coreference");
    gen_cmd->add_option("--seed", gen.seed, "data seed");

    TrainArgs tr;
    auto* train_app = app.add_subcommand("train", "train a model on a generated corpus");
    add_common(train_app, tr.common);
    train_app->add_option("-d,--data", tr.data, "corpus directory")->capture_default_str();
    train_app->add_option("-r,--run-dir", tr.run_dir, "run directory")->capture_default_str();
    train_app->add_option("--variant", tr.variant, "g-transformer | baseline-transformer");
    train_app->add_option("--regime", tr.regime, "random-init-baseline | random-init-gtrans | finetune-gtrans");
    train_app->add_option("--seed", tr.seed, "training seed");
    train_app->add_option("--init-from", tr.init_from, "sentence-level checkpoint for fine-tuning");
    train_app->add_flag("-q,--quiet", tr.quiet, "no progress output");

    DecodeArgs dec;
    auto* decode_app = app.add_subcommand("decode", "beam-search translate documents");
    add_common(decode_app, dec.common);
    decode_app->add_option("-m,--checkpoint", dec.checkpoint, "model checkpoint")->required();
    decode_app->add_option("-i,--input", dec.input, "source documents, one per line")->required();
    decode_app->add_option("-o,--output", dec.output, "translated documents")->required();
    decode_app->add_option("--vocab", dec.vocab, "vocabulary file (default: generated t<id> names)");
    decode_app->add_option("--alignment", dec.alignment, "write per-sentence source/output pairs here");
    decode_app->add_option("--beam", dec.beam, "beam size");
    decode_app->add_option("--run-dir", dec.run_dir, "manifest directory (default: next to the output)");

    EvalArgs ev;
    auto* eval_app = app.add_subcommand("eval", "score translations with BLEU");
    eval_app->add_option("--hyp", ev.hyp, "candidate documents")->required();
    eval_app->add_option("--ref", ev.ref, "reference documents")->required();
    eval_app->add_option("--level", ev.level, "d (whole documents) or s (aligned sentences)")
        ->check(CLI::IsMember({"d", "s"}))
        ->capture_default_str();
    eval_app->add_option("--run-dir", ev.run_dir, "manifest directory (default: next to --hyp)");

    DiagnoseArgs dg;
    auto* diag_app = app.add_subcommand("diagnose", "summarise plateaus and entropy trends of a training log");
    diag_app->add_option("-l,--log", dg.log, "train_log.jsonl")->required();
    diag_app->add_option("--window", dg.window, "plateau window in checkpoints")->capture_default_str();
    diag_app->add_option("--tol", dg.tol, "minimum loss gain across a window")->capture_default_str();
    diag_app->add_option("--band", dg.band, "entropy tolerance band in bits")->capture_default_str();
    diag_app->add_option("--after", dg.after, "ignore entropy before this step")->capture_default_str();
    diag_app->add_option("--csv", dg.csv, "write all log records as CSV");
    diag_app->add_option("--run-dir", dg.run_dir, "manifest directory (default: next to the log)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    Manifest manifest(name, argc, argv);
    try {
        if (*gen_cmd) return gen_data(gen, manifest);
        if (*train_app) return train_cmd(tr, manifest);
        if (*decode_app) return decode_cmd(dec, manifest);
        if (*eval_app) return eval_cmd(ev, manifest);
        return diagnose_cmd(dg, manifest);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace gtr::cli

int main(int argc, char** argv) { return gtr::cli::run(argc, argv); }
