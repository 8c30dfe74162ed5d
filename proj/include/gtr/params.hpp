#pragma once

#include <Eigen/Dense>

#include <deque>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace gtr {

/// A named learnable matrix and its accumulated gradient.
struct Parameter {
    std::string name;
    Eigen::MatrixXd value;
    // Accumulator written by backward passes; not part of the value.
    mutable Eigen::MatrixXd grad;

    [[nodiscard]] Eigen::Index size() const noexcept { return value.size(); }
};

/// Ordered, name-indexed parameter container. Addresses of stored
/// parameters stay valid for the lifetime of the store.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore& other);
    ParamStore& operator=(const ParamStore& other);
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

    Parameter& add(const std::string& name, Eigen::MatrixXd value);

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }
    [[nodiscard]] Parameter& at(const std::string& name);
    [[nodiscard]] const Parameter& at(const std::string& name) const;

    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
    [[nodiscard]] Eigen::Index scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    [[nodiscard]] auto begin() const { return params_.begin(); }
    [[nodiscard]] auto end() const { return params_.end(); }

    void zero_grad();

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

/// Glorot/Xavier uniform initialisation for a [fan_in x fan_out] matrix.
[[nodiscard]] Eigen::MatrixXd xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// I.i.d. normal entries with the given standard deviation.
[[nodiscard]] Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

/// Checkpoint container: a key/value config header, a format version and
/// raw little-endian float64 tensor payloads. Writing then reading yields
/// bit-identical tensors.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    std::map<std::string, std::string> header;
    ParamStore params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gtr
