#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atomsim {

/// Invalid parameters supplied by the caller.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A draw violated a bound the caller promised (e.g. |phi| above its stated sup).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// A Bernoulli factory used more coin flips than its budget allows. The usual
/// cause is a lower bound beta that exceeds the true success probability.
struct BudgetExceeded : std::runtime_error {
    BudgetExceeded(const std::string& what, std::uint64_t used)
        : std::runtime_error(what + " (" + std::to_string(used) + " flips used)"), message(what), flips_used(used)
    {
    }

    /// Same failure with extra context appended to the message.
    BudgetExceeded with_context(const std::string& context) const
    {
        return BudgetExceeded(message + context, flips_used);
    }

    std::string message;
    std::uint64_t flips_used;
};

/// A rejection loop or a tour exceeded its kernel-draw budget.
struct DrawBudgetExceeded : std::runtime_error {
    DrawBudgetExceeded(const std::string& what, std::uint64_t used)
        : std::runtime_error(what + " (" + std::to_string(used) + " draws)"), draws(used)
    {
    }
    std::uint64_t draws;
};

/// Every particle received zero weight at some step.
struct ParticleDeath : std::runtime_error {
    ParticleDeath(const std::string& what, std::size_t step)
        : std::runtime_error(what + " at step " + std::to_string(step + 1)), step(step)
    {
    }
    std::size_t step; ///< zero-based time index
};

/// The beta diagnostic did not stop within its budget at some state.
struct DiagnosticFailure : std::runtime_error {
    DiagnosticFailure(const std::string& what, std::uint64_t flips)
        : std::runtime_error(what + " (" + std::to_string(flips) + " flips)"), flips_used(flips)
    {
    }
    std::uint64_t flips_used;
};

} // namespace atomsim
