#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace earpipe {

/// Invalid parameters or configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that cannot be processed. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Event {
    std::string label;
    double start_s = 0.0;
    double end_s = 0.0;
};

/// Multichannel recording in microvolts. Rows are channels, columns samples.
struct Recording {
    double rate = 0.0;
    std::vector<std::string> labels;
    Eigen::MatrixXd data;
    std::vector<Event> events;
    /// Time of sample 0, seconds since session start.
    double start_s = 0.0;
    /// Samples at each edge touched by zero padding of an earlier filter.
    std::size_t edge_samples = 0;

    Eigen::Index channels() const { return data.rows(); }
    Eigen::Index samples() const { return data.cols(); }
    double duration() const { return rate > 0.0 ? static_cast<double>(data.cols()) / rate : 0.0; }

    /// Same metadata, new sample matrix.
    Recording with_data(Eigen::MatrixXd d) const
    {
        Recording r = *this;
        r.data = std::move(d);
        return r;
    }
};

/// Default "ch1".."chN" labels.
std::vector<std::string> default_labels(Eigen::Index n);

} // namespace earpipe
