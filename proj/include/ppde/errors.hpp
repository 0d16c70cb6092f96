#pragma once

#include <stdexcept>
#include <string>

namespace ppde {

/// Configuration / schema violation: names the offending field.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string field, const std::string& what)
        : std::runtime_error("schema error [" + field + "]: " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numerical failure during a run (non-finite values, failed contraction, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ppde
