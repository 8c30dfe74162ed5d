#include "gtr/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gtr/errors.hpp"

namespace gtr {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

ParamStore::ParamStore(const ParamStore& other) : params_(other.params_), index_(other.index_) {}

ParamStore& ParamStore::operator=(const ParamStore& other) {
    if (this != &other) {
        params_ = other.params_;
        index_ = other.index_;
    }
    return *this;
}

Parameter& ParamStore::add(const std::string& name, Eigen::MatrixXd value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    Parameter& p = params_.emplace_back();
    p.name = name;
    p.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    return p;
}

Parameter& ParamStore::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
}

Eigen::Index ParamStore::scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

Eigen::MatrixXd xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

namespace {

constexpr const char* kMagic = "GTRCKPT";

std::string read_line(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("truncated checkpoint: " + path.string());
    return line;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << kMagic << ' ' << Checkpoint::kFormatVersion << '\n';
    out << "header " << ckpt.header.size() << '\n';
    for (const auto& [k, v] : ckpt.header) {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw ConfigError("checkpoint header entries must be single-line, space-free keys: " + k);
        }
        out << k << ' ' << v << '\n';
    }
    out << "tensors " << ckpt.params.size() << '\n';
    for (const auto& p : ckpt.params) {
        out << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
    Checkpoint ckpt;
    {
        std::istringstream first(read_line(in, path));
        std::string magic;
        int version = 0;
        first >> magic >> version;
        if (magic != kMagic) throw ConfigError("not a checkpoint file: " + path.string());
        if (version != Checkpoint::kFormatVersion) {
            throw ConfigError("unsupported checkpoint version " + std::to_string(version));
        }
    }
    auto counted = [&](const std::string& keyword) {
        std::istringstream ls(read_line(in, path));
        std::string word;
        std::size_t n = 0;
        ls >> word >> n;
        if (word != keyword) throw ConfigError("malformed checkpoint section, expected " + keyword);
        return n;
    };
    const std::size_t n_header = counted("header");
    for (std::size_t i = 0; i < n_header; ++i) {
        const std::string line = read_line(in, path);
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw ConfigError("malformed checkpoint header line");
        ckpt.header[line.substr(0, sp)] = line.substr(sp + 1);
    }
    const std::size_t n_tensors = counted("tensors");
    for (std::size_t i = 0; i < n_tensors; ++i) {
        std::istringstream ls(read_line(in, path));
        std::string name;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        if (!(ls >> name >> rows >> cols) || rows < 0 || cols < 0) throw ConfigError("malformed tensor record");
        Eigen::MatrixXd m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (in.get() != '\n') throw ConfigError("corrupt tensor payload: " + name);
        ckpt.params.add(name, std::move(m));
    }
    return ckpt;
}

}  // namespace gtr
