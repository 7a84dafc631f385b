#pragma once

#include <stdexcept>
#include <string>

namespace storeq {

// Invalid user-supplied configuration (bad parameter ranges, schema violations).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Input data could not be ingested (malformed CSV, gaps in a time series).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// AR(1) estimation produced a slope outside (0,1); the series is not
// compatible with a stationary mean-reverting model.
class NonStationaryFitError : public std::runtime_error {
public:
    NonStationaryFitError(const std::string& what, double slope)
        : std::runtime_error(what), slope_(slope) {}
    double slope() const { return slope_; }

private:
    double slope_;
};

// Regression design matrix at one time step is rank deficient.
class BasisDegeneracyError : public std::runtime_error {
public:
    BasisDegeneracyError(const std::string& what, int step)
        : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

// A denominator in a closed-form expression vanished (e.g. the linear
// equation defining the equilibrium constant has no solution).
class SingularConfigurationError : public std::runtime_error {
public:
    explicit SingularConfigurationError(const std::string& what)
        : std::runtime_error(what) {}
};

}  // namespace storeq
