#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtr/corpus.hpp"
#include "gtr/diagnostics.hpp"
#include "gtr/model.hpp"

namespace gtr {

enum class Regime { random_init_baseline, random_init_gtrans, finetune_gtrans };

[[nodiscard]] std::string_view to_string(Regime r);
[[nodiscard]] Regime parse_regime(std::string_view s);
/// Word-dropout rate each regime uses unless configured otherwise.
[[nodiscard]] double default_word_dropout(Regime r);

struct TrainConfig {
    double learning_rate = 5e-4;
    double transferred_learning_rate = 1e-4;  // fine-tune regime only
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-9;
    int warmup_steps = 4000;
    int max_steps = 100000;
    int batch_tokens = 4096;
    int eval_every = 500;
    int patience = 10;          // validation rounds without improvement
    double clip_norm = 1.0;     // <= 0 disables clipping
    int entropy_every = 200;    // 0 disables entropy snapshots
    int entropy_docs = 8;       // dev documents traced per snapshot
    std::size_t max_instance_tokens = 512;
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> snapshot_dir;  // written on divergence

    void validate() const;
};

[[nodiscard]] KeyValues to_key_values(const TrainConfig& c);
bool set_train_field(TrainConfig& c, const std::string& key, const std::string& value);

/// base_lr * min(step^-0.5, step * warmup^-1.5) * warmup^0.5; peaks at base_lr
/// when step == warmup.
[[nodiscard]] double lr_schedule(int step, int warmup, double base_lr);

/// Adam moments for one parameter tensor.
struct AdamState {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;
};

/// One bias-corrected Adam update of `value` using `grad`; `t` counts from 1.
void adam_update(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad, AdamState& state, double lr, double beta1,
                 double beta2, double eps, int t);

/// Rescales every gradient so the global norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

struct LogRecord {
    int step;
    std::string split;
    std::string metric;
    double value;
};

struct TrainLog {
    std::vector<LogRecord> records;

    void add(int step, std::string split, std::string metric, double value);
    /// (step, value) pairs of one series in step order.
    [[nodiscard]] std::vector<std::pair<int, double>> series(const std::string& split, const std::string& metric) const;
    void save(const std::filesystem::path& path) const;
    [[nodiscard]] static TrainLog load(const std::filesystem::path& path);
};

struct EvalResult {
    double loss = 0.0;      // label-smoothed, per target token
    double nll = 0.0;       // per target token
    double accuracy = 0.0;  // teacher-forced argmax accuracy
    long tokens = 0;
};

/// Teacher-forced evaluation over documents (each split into instances).
[[nodiscard]] EvalResult evaluate(const Transformer& model, std::span<const ParallelDocument> docs,
                                  std::size_t max_instance_tokens = 512);

/// Attention entropy of a teacher-forced pass over `docs`.
[[nodiscard]] EntropyEntry entropy_snapshot(const Transformer& model, std::span<const ParallelDocument> docs);

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
    [[nodiscard]] int step() const noexcept { return step_; }

private:
    int step_;
};

struct TrainResult {
    ParamStore best_params;
    int best_step = 0;
    double best_valid_loss = 0.0;
    int steps_run = 0;
    bool early_stopped = false;
    TrainLog log;
    EntropySeries entropy;
};

using ProgressFn = std::function<void(const LogRecord&)>;

/// Trains `model` in place. The fine-tune regime needs the partition from
/// transfer_from_sentence_model; transferred parameters then use
/// transferred_learning_rate. Throws DivergenceError on a non-finite loss.
TrainResult train(Transformer& model, const Corpus& corpus, Regime regime, const TrainConfig& config,
                  const std::map<std::string, ParamGroup>* partition = nullptr, const ProgressFn& progress = {});

}  // namespace gtr
