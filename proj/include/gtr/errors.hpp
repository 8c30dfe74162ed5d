#pragma once

#include <stdexcept>
#include <string>

namespace gtr {

/// Inconsistent matrix shapes, head counts or parameter widths.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (rates, layer counts, file contents).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace gtr
