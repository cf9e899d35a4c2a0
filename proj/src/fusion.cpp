#include "hddf/fusion.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "hddf/errors.hpp"

namespace hddf {

std::set<std::uint64_t> StackSlot::object_ids() const {
  std::set<std::uint64_t> out;
  for (const auto& entry : payload) {
    for (const auto& [id, c] : entry.realization.classes) out.insert(id);
  }
  return out;
}

StackSlot build_own_slot(const HybridBelief& local, std::uint64_t step) {
  StackSlot slot;
  slot.robot_id = local.robot_id();
  slot.timestamp = step;
  std::vector<VariableKey> object_vars;
  for (auto id : local.known_objects()) {
    object_vars.push_back(VariableKey::object_pose(id));
  }
  if (object_vars.empty()) return slot;
  for (const auto& h : local.hypotheses()) {
    SlotEntry entry;
    entry.realization = h.realization;
    double log_prior = 0.0;
    if (!object_vars.empty()) {
      GaussianDensity xi = marginalize(h.belief, object_vars);
      for (auto id : local.known_objects()) {
        xi = divide(xi, local.object_pose_prior(id));
        const ClassLabel c = h.realization.classes.at(id);
        log_prior += std::log(local.class_prior(id)(c - 1));
      }
      entry.xi = std::move(xi);
    }
    entry.log_phi = h.log_weight - log_prior;
    slot.payload.push_back(std::move(entry));
  }
  return slot;
}

Stack merge_stacks(const Stack& mine, const std::vector<Stack>& received) {
  Stack out = mine;
  for (const auto& r : received) {
    for (const auto& [rid, slot] : r.slots) {
      auto it = out.slots.find(rid);
      if (it == out.slots.end() || slot.timestamp > it->second.timestamp) {
        out.slots[rid] = slot;
      }
    }
  }
  return out;
}

ExternalUpdate compute_external_update(const Stack& current,
                                       const Stack& previous,
                                       std::uint32_t self_id,
                                       bool double_count) {
  ExternalUpdate out;
  for (const auto& [rid, cur] : current.slots) {
    if (rid == self_id) continue;
    const StackSlot* prev = nullptr;
    auto pit = previous.slots.find(rid);
    if (pit != previous.slots.end()) prev = &pit->second;

    if (!double_count && prev && prev->timestamp == cur.timestamp) continue;
    const bool use_denominator =
        !double_count && prev != nullptr && !prev->payload.empty();
    const std::set<std::uint64_t> prev_objects =
        use_denominator ? prev->object_ids() : std::set<std::uint64_t>{};

    RobotContribution contrib;
    contrib.objects = cur.object_ids();
    for (const auto& entry : cur.payload) {
      ExternalTerm term;
      if (use_denominator) {
        const ClassRealization denom_r =
            entry.realization.restricted_to(prev_objects);
        const SlotEntry* match = nullptr;
        for (const auto& pe : prev->payload) {
          if (pe.realization == denom_r) {
            match = &pe;
            break;
          }
        }
        if (!match) {
          // Pruned upstream between the two snapshots; nothing safe to
          // remove, so this realization contributes identity.
          ++out.pruning_mismatches;
          continue;
        }
        term.continuous = match->xi.empty()
                              ? entry.xi
                              : divide(entry.xi, match->xi);
        term.log_discrete = entry.log_phi - match->log_phi;
      } else {
        term.continuous = entry.xi;
        term.log_discrete = entry.log_phi;
      }
      contrib.terms.emplace(entry.realization, std::move(term));
    }
    if (!contrib.terms.empty()) {
      out.contributions.emplace(rid, std::move(contrib));
    }
  }
  return out;
}

std::map<std::uint64_t, Pose2> ExternalUpdate::mentioned_objects() const {
  std::map<std::uint64_t, Pose2> out;
  for (const auto& [rid, contrib] : contributions) {
    for (const auto& [r, term] : contrib.terms) {
      for (const auto& v : term.continuous.vars()) {
        if (v.kind == VariableKey::Kind::ObjectPose && !out.count(v.index)) {
          out.emplace(v.index, term.continuous.lin_point(v));
        }
      }
    }
  }
  return out;
}

ExternalTerm ExternalUpdate::resolve(const ClassRealization& r) const {
  ExternalTerm total;
  for (const auto& [rid, contrib] : contributions) {
    const ClassRealization key = r.restricted_to(contrib.objects);
    if (key.classes.size() != contrib.objects.size()) {
      throw ContractViolation(
          "external update references objects the realization does not "
          "cover; expand the belief first");
    }
    auto it = contrib.terms.find(key);
    if (it == contrib.terms.end()) {
      // Sender pruned this realization; contributes identity.
      ++pruning_mismatches;
      continue;
    }
    if (!it->second.continuous.empty()) {
      total.continuous = total.continuous.empty()
                             ? it->second.continuous
                             : multiply(total.continuous,
                                        it->second.continuous);
    }
    total.log_discrete += it->second.log_discrete;
  }
  return total;
}

ExternalResolver ExternalUpdate::resolver() const {
  return [this](const ClassRealization& r) { return resolve(r); };
}

namespace {

constexpr std::uint16_t kWireVersion = 1;

struct Writer {
  std::vector<std::uint8_t> buf;
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw DecodeError("stack payload truncated");
    }
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

void write_density(Writer& w, const GaussianDensity& d) {
  const int n = d.num_vars();
  w.u32(static_cast<std::uint32_t>(n));
  for (const auto& v : d.vars()) {
    w.u8(static_cast<std::uint8_t>(v.kind));
    w.u32(v.owner);
    w.u64(v.index);
  }
  const int dim = d.dim();
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j <= i; ++j) w.f64(d.lambda()(i, j));
  }
  for (int i = 0; i < dim; ++i) w.f64(d.eta()(i));
  for (const auto& p : d.lin_points()) {
    w.f64(p.x);
    w.f64(p.y);
    w.f64(p.theta);
  }
}

GaussianDensity read_density(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n == 0) return {};
  std::vector<VariableKey> vars;
  vars.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw DecodeError("unknown variable kind");
    VariableKey v;
    v.kind = static_cast<VariableKey::Kind>(kind);
    v.owner = r.u32();
    v.index = r.u64();
    vars.push_back(v);
  }
  const int dim = 3 * static_cast<int>(n);
  Eigen::MatrixXd lambda(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = r.f64();
      lambda(i, j) = v;
      lambda(j, i) = v;
    }
  }
  Eigen::VectorXd eta(dim);
  for (int i = 0; i < dim; ++i) eta(i) = r.f64();
  std::vector<Pose2> lin;
  lin.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double x = r.f64();
    const double y = r.f64();
    const double th = r.f64();
    lin.emplace_back(x, y, th);
  }
  return GaussianDensity(std::move(vars), std::move(lambda), std::move(eta),
                         std::move(lin));
}

}  // namespace

std::vector<std::uint8_t> serialize_stack(const Stack& s) {
  Writer w;
  w.u16(kWireVersion);
  w.u32(s.owner);
  if (s.slots.size() > 0xffff) {
    throw ContractViolation("serialize_stack: too many slots");
  }
  w.u16(static_cast<std::uint16_t>(s.slots.size()));
  for (const auto& [rid, slot] : s.slots) {
    w.u32(slot.robot_id);
    w.u64(slot.timestamp);
    w.u32(static_cast<std::uint32_t>(slot.payload.size()));
    for (const auto& entry : slot.payload) {
      w.u32(static_cast<std::uint32_t>(entry.realization.classes.size()));
      for (const auto& [id, c] : entry.realization.classes) {
        w.u64(id);
        w.u16(static_cast<std::uint16_t>(c));
      }
      w.f64(std::exp(entry.log_phi));
      write_density(w, entry.xi);
    }
  }
  return w.buf;
}

Stack deserialize_stack(const std::vector<std::uint8_t>& payload) {
  Reader r{payload};
  const std::uint16_t version = r.u16();
  if (version != kWireVersion) {
    throw DecodeError("unsupported stack wire version " +
                      std::to_string(version));
  }
  Stack out;
  out.owner = r.u32();
  const std::uint16_t n_slots = r.u16();
  for (std::uint16_t s = 0; s < n_slots; ++s) {
    StackSlot slot;
    slot.robot_id = r.u32();
    slot.timestamp = r.u64();
    const std::uint32_t n_real = r.u32();
    for (std::uint32_t i = 0; i < n_real; ++i) {
      SlotEntry entry;
      const std::uint32_t n_obj = r.u32();
      for (std::uint32_t j = 0; j < n_obj; ++j) {
        const std::uint64_t id = r.u64();
        const std::uint16_t c = r.u16();
        if (c < 1) throw DecodeError("class labels are 1-based");
        entry.realization.classes[id] = static_cast<ClassLabel>(c);
      }
      const double phi = r.f64();
      if (!(phi >= 0.0) || !std::isfinite(phi)) {
        throw DecodeError("realization weight must be finite and nonnegative");
      }
      entry.log_phi = std::log(phi);
      entry.xi = read_density(r);
      slot.payload.push_back(std::move(entry));
    }
    out.slots.emplace(slot.robot_id, std::move(slot));
  }
  if (r.pos != payload.size()) {
    throw DecodeError("trailing bytes after stack payload");
  }
  return out;
}

}  // namespace hddf
