#pragma once

#include <stdexcept>
#include <string>

namespace devserve {

// One error category per distinct failure callers are expected to branch on.
enum class Errc {
    invalid_size,
    invalid_argument,
    empty_prompt,
    arena_exhausted,
    capacity_exceeded,
    illegal_transition,
    slot_not_empty,
    double_registration,
    region_out_of_bounds,
    permission_denied,
    window_overflow,
    shape_violation,
    empty_grid,
    poll_timeout,
    parse_error,
    duplicate_merge,
    invalid_token_id,
    empty_records,
    degenerate_curve,
    no_slot,
    transport_failure,
};

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace devserve
