#pragma once

#include <stdexcept>
#include <string>

namespace finmamba {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientHistoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};
/// Raised when a loss turns non-finite during training.
struct TrainingDivergence : std::runtime_error {
    TrainingDivergence(const std::string& what, std::size_t day)
        : std::runtime_error(what), day_index(day) {}
    std::size_t day_index;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace finmamba
