#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "hddf/hybrid_belief.hpp"

namespace hddf {

// One class-realization entry of a slot: the sender's marginal object-pose
// belief divided by the object-pose priors (xi) and its weight divided by
// the class prior (phi, kept in log space).
struct SlotEntry {
  ClassRealization realization;
  GaussianDensity xi;
  double log_phi = 0.0;
};

// A robot's broadcast unit: its local-information-only marginal beliefs
// with the timestamp of the data they condition on.
struct StackSlot {
  std::uint32_t robot_id = 0;
  std::uint64_t timestamp = 0;
  std::vector<SlotEntry> payload;

  std::set<std::uint64_t> object_ids() const;
};

struct Stack {
  std::uint32_t owner = 0;
  std::map<std::uint32_t, StackSlot> slots;

  std::uint64_t timestamp_of(std::uint32_t robot) const {
    auto it = slots.find(robot);
    return it == slots.end() ? 0 : it->second.timestamp;
  }
};

// Slot content for the owner itself, computed from the local-only hybrid
// belief: robot poses marginalized out, priors divided away.
StackSlot build_own_slot(const HybridBelief& local, std::uint64_t step);

// Per robot ID keep the slot with the largest timestamp; ties keep the
// incumbent. Unknown robots are adopted (relay).
Stack merge_stacks(const Stack& mine, const std::vector<Stack>& received);

// The update factors contributed by one sender since the receiver's
// previous stack snapshot.
struct RobotContribution {
  std::set<std::uint64_t> objects;  // sender's object set (numerator slot)
  std::map<ClassRealization, ExternalTerm> terms;
};

class ExternalUpdate {
 public:
  std::map<std::uint32_t, RobotContribution> contributions;
  // Incremented when a realization has no matching entry to divide by or
  // resolve against (pruned on the other side); also counted from resolve.
  mutable int pruning_mismatches = 0;

  bool identity() const { return contributions.empty(); }

  // Objects referenced by any contribution, with a linearization point to
  // seed receiver-side expansion.
  std::map<std::uint64_t, Pose2> mentioned_objects() const;

  // Lifts the per-sender factors onto a receiver realization: each sender's
  // factor is looked up by restricting the realization to the sender's
  // object set. Missing entries contribute identity.
  ExternalTerm resolve(const ClassRealization& realization) const;
  ExternalResolver resolver() const;
};

// Factors xi_k / xi_{k-1} and phi_k / phi_{k-1} per sender with a changed
// timestamp; the owner's own slot is excluded. With double_count set, every
// present sender slot contributes its full numerator each call and the
// denominators are forced to identity.
ExternalUpdate compute_external_update(const Stack& current,
                                       const Stack& previous,
                                       std::uint32_t self_id,
                                       bool double_count = false);

// Versioned little-endian wire format; lossless round trip.
std::vector<std::uint8_t> serialize_stack(const Stack& s);
Stack deserialize_stack(const std::vector<std::uint8_t>& payload);

}  // namespace hddf
