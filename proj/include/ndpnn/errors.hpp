#pragma once

#include <stdexcept>
#include <string>

namespace ndpnn {

/// Geometry or parameter combination that admits no solution
/// (e.g. requested window count cannot tile the image).
class infeasible_error : public std::runtime_error {
public:
    explicit infeasible_error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or truncated on-disk record.
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes incompatible with the requested operation.
class shape_error : public std::invalid_argument {
public:
    explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Image aspect ratio does not match the configured window aspect ratio.
class aspect_error : public std::runtime_error {
public:
    explicit aspect_error(const std::string& what) : std::runtime_error(what) {}
};

/// Window geometry cannot be realized for a concrete image.
class geometry_error : public std::runtime_error {
public:
    explicit geometry_error(const std::string& what) : std::runtime_error(what) {}
};

/// Loss became non-finite during optimization.
class training_diverged : public std::runtime_error {
public:
    explicit training_diverged(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ndpnn
