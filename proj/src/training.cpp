#include "gtr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "gtr/errors.hpp"
#include "gtr/layers.hpp"

namespace gtr {

std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::random_init_baseline: return "random-init-baseline";
        case Regime::random_init_gtrans: return "random-init-gtrans";
        case Regime::finetune_gtrans: return "finetune-gtrans";
    }
    return "random-init-gtrans";
}

Regime parse_regime(std::string_view s) {
    for (Regime r : {Regime::random_init_baseline, Regime::random_init_gtrans, Regime::finetune_gtrans}) {
        if (s == to_string(r)) return r;
    }
    throw ConfigError("unknown regime: " + std::string(s));
}

double default_word_dropout(Regime r) { return r == Regime::finetune_gtrans ? 0.1 : 0.3; }

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !(transferred_learning_rate >= 0.0)) {
        throw ConfigError("learning rates must be non-negative");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
    if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
    if (batch_tokens < 1 || eval_every < 1 || patience < 1) {
        throw ConfigError("batch_tokens, eval_every and patience must be positive");
    }
    if (entropy_every < 0 || entropy_docs < 0) throw ConfigError("entropy settings must be non-negative");
    if (max_instance_tokens == 0) throw ConfigError("max_instance_tokens must be positive");
}

KeyValues to_key_values(const TrainConfig& c) {
    return {
        {"learning_rate", format_double(c.learning_rate)},
        {"transferred_learning_rate", format_double(c.transferred_learning_rate)},
        {"adam_beta1", format_double(c.adam_beta1)},
        {"adam_beta2", format_double(c.adam_beta2)},
        {"adam_eps", format_double(c.adam_eps)},
        {"warmup_steps", std::to_string(c.warmup_steps)},
        {"max_steps", std::to_string(c.max_steps)},
        {"batch_tokens", std::to_string(c.batch_tokens)},
        {"eval_every", std::to_string(c.eval_every)},
        {"patience", std::to_string(c.patience)},
        {"clip_norm", format_double(c.clip_norm)},
        {"entropy_every", std::to_string(c.entropy_every)},
        {"entropy_docs", std::to_string(c.entropy_docs)},
        {"max_instance_tokens", std::to_string(c.max_instance_tokens)},
        {"seed", std::to_string(c.seed)},
    };
}

bool set_train_field(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "transferred_learning_rate") c.transferred_learning_rate = parse_double(key, value);
    else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") c.adam_eps = parse_double(key, value);
    else if (key == "warmup_steps") c.warmup_steps = parse_int(key, value);
    else if (key == "max_steps") c.max_steps = parse_int(key, value);
    else if (key == "batch_tokens") c.batch_tokens = parse_int(key, value);
    else if (key == "eval_every") c.eval_every = parse_int(key, value);
    else if (key == "patience") c.patience = parse_int(key, value);
    else if (key == "clip_norm") c.clip_norm = parse_double(key, value);
    else if (key == "entropy_every") c.entropy_every = parse_int(key, value);
    else if (key == "entropy_docs") c.entropy_docs = parse_int(key, value);
    else if (key == "max_instance_tokens") {
        const int v = parse_int(key, value);
        if (v < 1) throw ConfigError("max_instance_tokens must be positive");
        c.max_instance_tokens = static_cast<std::size_t>(v);
    } else if (key == "seed") {
        const int v = parse_int(key, value);
        if (v < 0) throw ConfigError("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(v);
    } else return false;
    return true;
}

double lr_schedule(int step, int warmup, double base_lr) {
    if (step < 1 || warmup < 1) throw ConfigError("lr_schedule needs step >= 1 and warmup >= 1");
    const double s = step, w = warmup;
    return base_lr * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5)) * std::sqrt(w);
}

void adam_update(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad, AdamState& state, double lr, double beta1,
                 double beta2, double eps, int t) {
    if (state.m.size() == 0) {
        state.m = Eigen::MatrixXd::Zero(value.rows(), value.cols());
        state.v = Eigen::MatrixXd::Zero(value.rows(), value.cols());
    }
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    value.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (p.grad.size()) sq += p.grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params) {
            if (p.grad.size()) p.grad *= s;
        }
    }
    return norm;
}

void TrainLog::add(int step, std::string split, std::string metric, double value) {
    records.push_back({step, std::move(split), std::move(metric), value});
}

std::vector<std::pair<int, double>> TrainLog::series(const std::string& split, const std::string& metric) const {
    std::vector<std::pair<int, double>> out;
    for (const auto& r : records) {
        if (r.split == split && r.metric == metric) out.emplace_back(r.step, r.value);
    }
    return out;
}

void TrainLog::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) {
        out << nlohmann::json{{"step", r.step}, {"split", r.split}, {"metric", r.metric}, {"value", r.value}}.dump()
            << '\n';
    }
}

TrainLog TrainLog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    TrainLog log;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        log.add(j.at("step").get<int>(), j.at("split").get<std::string>(), j.at("metric").get<std::string>(),
                j.at("value").get<double>());
    }
    return log;
}

namespace {

std::vector<ParallelDocument> instances_of(std::span<const ParallelDocument> docs, std::size_t cap) {
    std::vector<ParallelDocument> out;
    for (const auto& d : docs) {
        auto parts = split_parallel(d, cap);
        out.insert(out.end(), std::make_move_iterator(parts.begin()), std::make_move_iterator(parts.end()));
    }
    return out;
}

std::size_t instance_size(const ParallelDocument& d) { return std::max(d.src.tokens.size(), d.tgt.tokens.size()); }

long target_tokens(const std::vector<TokenId>& tgt_out) {
    return static_cast<long>(std::count_if(tgt_out.begin(), tgt_out.end(), [](TokenId t) { return t != kSpecial.pad; }));
}

}  // namespace

EvalResult evaluate(const Transformer& model, std::span<const ParallelDocument> docs, std::size_t max_instance_tokens) {
    EvalResult r;
    double loss = 0.0, nll = 0.0;
    long correct = 0;
    for (const auto& inst : instances_of(docs, max_instance_tokens)) {
        const auto ex = make_teacher_forced(inst.src, inst.tgt);
        Tape tape(false);
        ForwardContext ctx;
        const Var enc = model.encode(tape, ex.src, ex.g_x, ctx);
        const Var logits = model.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx);
        loss += ag::label_smoothed_nll(logits, ex.tgt_out, model.config().label_smoothing, kSpecial.pad).value()(0, 0);
        nll += ag::label_smoothed_nll(logits, ex.tgt_out, 0.0, kSpecial.pad).value()(0, 0);
        for (std::size_t i = 0; i < ex.tgt_out.size(); ++i) {
            if (ex.tgt_out[i] == kSpecial.pad) continue;
            Index best = 0;
            logits.value().row(static_cast<Index>(i)).maxCoeff(&best);
            correct += best == ex.tgt_out[i];
        }
        r.tokens += target_tokens(ex.tgt_out);
    }
    if (r.tokens > 0) {
        const auto n = static_cast<double>(r.tokens);
        r.loss = loss / n;
        r.nll = nll / n;
        r.accuracy = static_cast<double>(correct) / n;
    }
    return r;
}

EntropyEntry entropy_snapshot(const Transformer& model, std::span<const ParallelDocument> docs) {
    AttentionTrace trace;
    for (const auto& d : docs) {
        const auto ex = make_teacher_forced(d.src, d.tgt);
        Tape tape(false);
        ForwardContext ctx{false, nullptr, &trace};
        const Var enc = model.encode(tape, ex.src, ex.g_x, ctx);
        (void)model.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx);
    }
    return attention_entropy(trace);
}

namespace {

void check_regime(const Transformer& model, Regime regime, const std::map<std::string, ParamGroup>* partition) {
    const bool baseline = model.config().variant == Variant::baseline;
    if ((regime == Regime::random_init_baseline) != baseline) {
        throw ConfigError("regime " + std::string(to_string(regime)) + " does not match model variant " +
                          std::string(to_string(model.config().variant)));
    }
    if (regime == Regime::finetune_gtrans) {
        if (partition == nullptr) throw ConfigError("fine-tune regime needs a transferred/fresh partition");
        for (const auto& p : model.params()) {
            if (!partition->contains(p.name)) throw ConfigError("partition lacks parameter " + p.name);
        }
    }
}

void write_divergence_snapshot(const TrainConfig& config, const Transformer& model, const TrainLog& log, int step) {
    if (!config.snapshot_dir) return;
    std::filesystem::create_directories(*config.snapshot_dir);
    Checkpoint ck;
    ck.header = to_key_values(model.config());
    ck.header["diverged_at_step"] = std::to_string(step);
    ck.params = model.params();
    save_checkpoint(*config.snapshot_dir / "diverged.ckpt", ck);
    log.save(*config.snapshot_dir / "diverged.log.jsonl");
}

}  // namespace

TrainResult train(Transformer& model, const Corpus& corpus, Regime regime, const TrainConfig& config,
                  const std::map<std::string, ParamGroup>* partition, const ProgressFn& progress) {
    config.validate();
    check_regime(model, regime, partition);
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig& mc = model.config();
    std::mt19937_64 rng(config.seed);

    const auto train_set = instances_of(corpus.train, config.max_instance_tokens);
    if (train_set.empty()) throw ConfigError("training split is empty");
    const std::span<const ParallelDocument> dev(corpus.dev);
    const auto traced = dev.first(std::min(dev.size(), static_cast<std::size_t>(config.entropy_docs)));

    TrainResult result;
    auto log = [&](int step, const std::string& split, const std::string& metric, double value) {
        result.log.add(step, split, metric, value);
        if (progress) progress(result.log.records.back());
    };
    auto snapshot_entropy = [&](int step) {
        if (config.entropy_every == 0 || traced.empty()) return;
        const EntropyEntry e = entropy_snapshot(model, traced);
        for (const auto& [key, h] : e.by_layer) log(step, "valid", "entropy/" + to_string(key), h);
        for (const auto& [site, h] : e.by_site) log(step, "valid", "entropy/" + std::string(to_string(site)), h);
        result.entropy.push_back({step, e});
    };
    int rounds_without_gain = 0;
    auto validate = [&](int step) {
        const EvalResult ev = evaluate(model, dev, config.max_instance_tokens);
        log(step, "valid", "loss", ev.loss);
        log(step, "valid", "nll", ev.nll);
        log(step, "valid", "accuracy", ev.accuracy);
        log(step, "valid", "wall_clock_s",
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        if (step == 0 || ev.loss < result.best_valid_loss) {
            result.best_valid_loss = ev.loss;
            result.best_step = step;
            result.best_params = model.params();
            rounds_without_gain = 0;
        } else {
            ++rounds_without_gain;
        }
    };

    std::map<std::string, AdamState> adam;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    validate(0);
    snapshot_entropy(0);
    int step = 0;
    while (step < config.max_steps) {
        // token-count batch of whole instances
        std::vector<std::size_t> batch;
        std::size_t used = 0;
        while (true) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t size = instance_size(train_set[order[cursor]]);
            if (!batch.empty() && used + size > static_cast<std::size_t>(config.batch_tokens)) break;
            batch.push_back(order[cursor++]);
            used += size;
            if (used >= static_cast<std::size_t>(config.batch_tokens)) break;
        }

        ++step;
        model.params().zero_grad();
        double loss_sum = 0.0;
        long tokens = 0;
        for (const std::size_t idx : batch) {
            const auto& inst = train_set[idx];
            auto ex = make_teacher_forced(inst.src, inst.tgt);
            ex.src = word_dropout(ex.src, mc.word_dropout, kSpecial.unk, rng);
            ex.tgt_in = word_dropout(ex.tgt_in, mc.word_dropout, kSpecial.unk, rng);
            Tape tape;
            ForwardContext ctx{true, &rng, nullptr};
            const Var enc = model.encode(tape, ex.src, ex.g_x, ctx);
            const Var logits = model.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx);
            const Var loss = ag::label_smoothed_nll(logits, ex.tgt_out, mc.label_smoothing, kSpecial.pad);
            loss_sum += loss.value()(0, 0);
            tokens += target_tokens(ex.tgt_out);
            tape.backward(loss);
        }
        if (!std::isfinite(loss_sum)) {
            log(step, "train", "loss", loss_sum);
            write_divergence_snapshot(config, model, result.log, step);
            throw DivergenceError("training loss became non-finite at step " + std::to_string(step), step);
        }
        const double inv = tokens > 0 ? 1.0 / static_cast<double>(tokens) : 0.0;
        for (auto& p : model.params()) {
            if (p.grad.size()) p.grad *= inv;
        }
        const double grad_norm = clip_grad_norm(model.params(), config.clip_norm);
        const double scale = lr_schedule(step, config.warmup_steps, 1.0);
        for (auto& p : model.params()) {
            if (p.grad.size() == 0) continue;
            const bool transferred =
                regime == Regime::finetune_gtrans && partition->at(p.name) == ParamGroup::transferred;
            const double lr = scale * (transferred ? config.transferred_learning_rate : config.learning_rate);
            adam_update(p.value, p.grad, adam[p.name], lr, config.adam_beta1, config.adam_beta2, config.adam_eps, step);
        }
        log(step, "train", "loss", loss_sum * inv);
        log(step, "train", "grad_norm", grad_norm);
        log(step, "train", "lr", scale * config.learning_rate);

        if (config.entropy_every > 0 && step % config.entropy_every == 0) snapshot_entropy(step);
        if (step % config.eval_every == 0 || step == config.max_steps) {
            validate(step);
            if (rounds_without_gain >= config.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    result.steps_run = step;
    return result;
}

}  // namespace gtr
