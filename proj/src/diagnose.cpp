#include "xfermon/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "xfermon/error.hpp"

namespace xfermon {
namespace {

constexpr std::array<Minimal, 9> kRates = {
    Minimal::SenderOstRead,     Minimal::SenderClientRead,    Minimal::SenderLnetNicRx,
    Minimal::SenderWanNicTx,    Minimal::ReceiverOstWrite,    Minimal::ReceiverClientWrite,
    Minimal::ReceiverLnetNicTx, Minimal::ReceiverWanNicRx,    Minimal::TransferThroughput,
};

constexpr std::array<Minimal, 11> kRuleOperands = {
    Minimal::SenderTcpSendBufMax, Minimal::ReceiverTcpRecvBufMax, Minimal::SenderRetransmitted,
    Minimal::SenderTotalSent,     Minimal::SenderRtt,             Minimal::ReceiverClientWrite,
    Minimal::SenderOstRead,       Minimal::SenderClientRead,      Minimal::ReceiverOstWrite,
    Minimal::SenderLnetNicRx,     Minimal::ReceiverLnetNicTx,
};

const std::string& name_of(Minimal m) { return catalog(Profile::Minimal14)[index_of(m)].name; }

double at(const MinimalValues& v, Minimal m) { return v[index_of(m)]; }

}  // namespace

double retransmit_ratio(const MinimalValues& v) {
  const double sent = at(v, Minimal::SenderTotalSent);
  return sent > 0 ? at(v, Minimal::SenderRetransmitted) / sent : 0.0;
}

BaselineProfile fit_baseline(std::span<const DatasetRow> rows, double bdp_bytes) {
  if (rows.empty()) throw DataError("cannot fit a baseline from zero normal rows");
  if (!(bdp_bytes > 0)) throw DataError("baseline needs a positive BDP");
  BaselineProfile b;
  b.testbed_id = rows.front().testbed_id;
  b.bdp_bytes = bdp_bytes;
  b.rows = rows.size();
  // Welford updates: exact for constant columns.
  MinimalValues m2{};
  double k = 0;
  for (const auto& r : rows) {
    k += 1;
    for (std::size_t i = 0; i < kMinimalCount; ++i) {
      if (std::isnan(r.metrics[i])) throw DataError("normal row is missing " + catalog(Profile::Minimal14)[i].name);
      const double d = r.metrics[i] - b.mean[i];
      b.mean[i] += d / k;
      m2[i] += d * (r.metrics[i] - b.mean[i]);
    }
    b.disk_read_max = std::max(b.disk_read_max, at(r.metrics, Minimal::SenderOstRead));
    b.disk_write_max = std::max(b.disk_write_max, at(r.metrics, Minimal::ReceiverOstWrite));
  }
  for (std::size_t i = 0; i < kMinimalCount; ++i) b.stddev[i] = m2[i] / k;
  for (double& s : b.stddev) s = std::sqrt(s);
  for (Minimal m : kRates)
    if (!(b.mean[index_of(m)] > 0)) throw DataError("baseline mean of " + name_of(m) + " is not positive");
  b.normal_rtt_us = at(b.mean, Minimal::SenderRtt);
  if (!(b.normal_rtt_us > 0)) throw DataError("baseline rtt is not positive");
  b.normal_throughput = at(b.mean, Minimal::TransferThroughput);
  return b;
}

BaselineProfile fit_baseline(std::span<const DatasetRow> rows, const TestbedSpec& tb) {
  auto b = fit_baseline(rows, tb.bdp_bytes());
  b.testbed_id = tb.id;
  return b;
}

BaselineProfile BaselineProfile::normalized() const {
  BaselineProfile b = *this;
  for (Minimal m : kRates) {
    const auto i = index_of(m);
    b.mean[i] = 1.0;
    b.stddev[i] = stddev[i] / mean[i];
  }
  for (Minimal m : {Minimal::SenderTcpSendBufMax, Minimal::ReceiverTcpRecvBufMax}) {
    b.mean[index_of(m)] = mean[index_of(m)] / bdp_bytes;
    b.stddev[index_of(m)] = stddev[index_of(m)] / bdp_bytes;
  }
  const double sent = at(mean, Minimal::SenderTotalSent);
  b.mean[index_of(Minimal::SenderRetransmitted)] = sent > 0 ? at(mean, Minimal::SenderRetransmitted) / sent : 0.0;
  b.stddev[index_of(Minimal::SenderRetransmitted)] = sent > 0 ? at(stddev, Minimal::SenderRetransmitted) / sent : 0.0;
  b.mean[index_of(Minimal::SenderTotalSent)] = 1.0;
  b.stddev[index_of(Minimal::SenderTotalSent)] = 0.0;
  b.mean[index_of(Minimal::SenderRtt)] = 1.0;
  b.stddev[index_of(Minimal::SenderRtt)] = at(stddev, Minimal::SenderRtt) / normal_rtt_us;
  b.normal_rtt_us = 1.0;
  b.normal_throughput = 1.0;
  b.disk_read_max = disk_read_max / at(mean, Minimal::SenderOstRead);
  b.disk_write_max = disk_write_max / at(mean, Minimal::ReceiverOstWrite);
  b.bdp_bytes = 1.0;
  return b;
}

nlohmann::ordered_json BaselineProfile::to_json() const {
  nlohmann::ordered_json j;
  j["testbed_id"] = testbed_id;
  j["rows"] = rows;
  j["normal_rtt_us"] = normal_rtt_us;
  j["normal_throughput"] = normal_throughput;
  j["disk_read_max"] = disk_read_max;
  j["disk_write_max"] = disk_write_max;
  j["bdp_bytes"] = bdp_bytes;
  auto m = nlohmann::ordered_json::object();
  auto s = nlohmann::ordered_json::object();
  const auto cat = catalog(Profile::Minimal14);
  for (std::size_t i = 0; i < kMinimalCount; ++i) {
    m[cat[i].name] = mean[i];
    s[cat[i].name] = stddev[i];
  }
  j["mean"] = std::move(m);
  j["stddev"] = std::move(s);
  return j;
}

BaselineProfile BaselineProfile::from_json(const nlohmann::json& j) {
  try {
    BaselineProfile b;
    b.testbed_id = j.at("testbed_id").get<std::string>();
    b.rows = j.value("rows", std::size_t{0});
    b.normal_rtt_us = j.at("normal_rtt_us").get<double>();
    b.normal_throughput = j.at("normal_throughput").get<double>();
    b.disk_read_max = j.at("disk_read_max").get<double>();
    b.disk_write_max = j.at("disk_write_max").get<double>();
    b.bdp_bytes = j.at("bdp_bytes").get<double>();
    const auto cat = catalog(Profile::Minimal14);
    for (std::size_t i = 0; i < kMinimalCount; ++i) {
      b.mean[i] = j.at("mean").at(cat[i].name).get<double>();
      b.stddev[i] = j.at("stddev").at(cat[i].name).get<double>();
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed baseline: ") + e.what());
  }
}

void RuleConfig::validate() const {
  for (double k : {kappa_buf, kappa_near, kappa_gap, kappa_low, kappa_high, loss_ratio, rtt_factor})
    if (!(k > 0) || !std::isfinite(k)) throw DomainError("rule constants must be positive and finite");
  if (window_s < 1) throw DomainError("window_s must be >= 1");
}

nlohmann::ordered_json RuleConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kappa_buf"] = kappa_buf;
  j["kappa_near"] = kappa_near;
  j["kappa_gap"] = kappa_gap;
  j["kappa_low"] = kappa_low;
  j["kappa_high"] = kappa_high;
  j["loss_ratio"] = loss_ratio;
  j["rtt_factor"] = rtt_factor;
  j["window_s"] = window_s;
  return j;
}

RuleConfig RuleConfig::from_json(const nlohmann::json& j) {
  RuleConfig c;
  try {
    c.kappa_buf = j.value("kappa_buf", c.kappa_buf);
    c.kappa_near = j.value("kappa_near", c.kappa_near);
    c.kappa_gap = j.value("kappa_gap", c.kappa_gap);
    c.kappa_low = j.value("kappa_low", c.kappa_low);
    c.kappa_high = j.value("kappa_high", c.kappa_high);
    c.loss_ratio = j.value("loss_ratio", c.loss_ratio);
    c.rtt_factor = j.value("rtt_factor", c.rtt_factor);
    c.window_s = j.value("window_s", c.window_s);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed rule config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json Diagnosis::to_json() const {
  nlohmann::ordered_json j;
  j["transfer_id"] = transfer_id;
  j["t0"] = t0;
  j["t1"] = t1;
  j["label"] = to_string(label);
  j["fired_rule"] = fired_rule;
  auto& ev = j["evidence"] = nlohmann::ordered_json::object();
  for (const auto& e : evidence) ev[e.operand] = {{"observed", e.observed}, {"threshold", e.threshold}};
  return j;
}

MinimalValues aggregate_window(std::span<const MinimalValues> rows) {
  MinimalValues out{};
  if (rows.empty()) throw DomainError("cannot aggregate an empty window");
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < kMinimalCount; ++i) out[i] += r[i];
  for (std::size_t i = 0; i < kMinimalCount; ++i) out[i] /= n;
  return out;
}

Diagnosis classify_aggregate(const MinimalValues& v, const BaselineProfile& b, const RuleConfig& c) {
  for (Minimal m : kRuleOperands)
    if (std::isnan(at(v, m))) throw DataError("missing operand " + name_of(m));

  Diagnosis d;
  auto fire = [&](AnomalyClass cls, std::string rule, std::vector<Evidence> ev) {
    d.label = cls;
    d.fired_rule = std::move(rule);
    d.evidence = std::move(ev);
  };
  auto ev = [](Minimal m, double observed, double threshold) { return Evidence{name_of(m), observed, threshold}; };

  const double send_buf = at(v, Minimal::SenderTcpSendBufMax);
  const double recv_buf = at(v, Minimal::ReceiverTcpRecvBufMax);
  const double buf_limit = c.kappa_buf * b.bdp_bytes;
  const double ratio = retransmit_ratio(v);
  const double rtt = at(v, Minimal::SenderRtt);
  const double s_ost = at(v, Minimal::SenderOstRead);
  const double s_client = at(v, Minimal::SenderClientRead);
  const double s_lnet = at(v, Minimal::SenderLnetNicRx);
  const double r_ost = at(v, Minimal::ReceiverOstWrite);
  const double r_client = at(v, Minimal::ReceiverClientWrite);
  const double r_lnet = at(v, Minimal::ReceiverLnetNicTx);
  const double m_s_client = at(b.mean, Minimal::SenderClientRead);
  const double m_r_client = at(b.mean, Minimal::ReceiverClientWrite);
  // Client-vs-OST gaps are compared in baseline units so that the verdict
  // does not depend on the scale the rows are expressed in.
  const double s_gap_scale = m_s_client / at(b.mean, Minimal::SenderOstRead);
  const double r_gap_scale = m_r_client / at(b.mean, Minimal::ReceiverOstWrite);

  if (send_buf < buf_limit) {
    fire(AnomalyClass::SenderTcpBufferMisconfig, "R1", {ev(Minimal::SenderTcpSendBufMax, send_buf, buf_limit)});
  } else if (recv_buf < buf_limit) {
    fire(AnomalyClass::ReceiverTcpBufferMisconfig, "R2", {ev(Minimal::ReceiverTcpRecvBufMax, recv_buf, buf_limit)});
  } else if (ratio > c.loss_ratio) {
    fire(AnomalyClass::NetworkLoss, "R3", {{"retransmit_ratio", ratio, c.loss_ratio}});
  } else if (rtt > c.rtt_factor * b.normal_rtt_us && r_client < c.kappa_low * m_r_client) {
    fire(AnomalyClass::NetworkCongestion, "R4",
         {ev(Minimal::SenderRtt, rtt, c.rtt_factor * b.normal_rtt_us),
          ev(Minimal::ReceiverClientWrite, r_client, c.kappa_low * m_r_client)});
  } else if (s_ost >= c.kappa_near * b.disk_read_max && s_client < c.kappa_gap * s_ost * s_gap_scale) {
    fire(AnomalyClass::SenderOstReadCongestion, "R5",
         {ev(Minimal::SenderOstRead, s_ost, c.kappa_near * b.disk_read_max),
          ev(Minimal::SenderClientRead, s_client, c.kappa_gap * s_ost * s_gap_scale)});
  } else if (r_ost >= c.kappa_near * b.disk_write_max && r_client < c.kappa_gap * r_ost * r_gap_scale) {
    fire(AnomalyClass::ReceiverOstWriteCongestion, "R6",
         {ev(Minimal::ReceiverOstWrite, r_ost, c.kappa_near * b.disk_write_max),
          ev(Minimal::ReceiverClientWrite, r_client, c.kappa_gap * r_ost * r_gap_scale)});
  } else if (s_client < c.kappa_low * m_s_client && s_lnet > c.kappa_high * at(b.mean, Minimal::SenderLnetNicRx)) {
    fire(AnomalyClass::SenderClientReadCongestion, "R7",
         {ev(Minimal::SenderClientRead, s_client, c.kappa_low * m_s_client),
          ev(Minimal::SenderLnetNicRx, s_lnet, c.kappa_high * at(b.mean, Minimal::SenderLnetNicRx))});
  } else if (r_client < c.kappa_low * m_r_client && r_lnet > c.kappa_high * at(b.mean, Minimal::ReceiverLnetNicTx)) {
    fire(AnomalyClass::ReceiverClientWriteCongestion, "R8",
         {ev(Minimal::ReceiverClientWrite, r_client, c.kappa_low * m_r_client),
          ev(Minimal::ReceiverLnetNicTx, r_lnet, c.kappa_high * at(b.mean, Minimal::ReceiverLnetNicTx))});
  } else {
    fire(AnomalyClass::Normal, "normal-fallback", {});
  }
  return d;
}

Diagnosis classify(std::span<const MinimalValues> window, const BaselineProfile& baseline, const RuleConfig& config,
                   std::string transfer_id, std::int64_t t0) {
  config.validate();
  if (static_cast<std::int64_t>(window.size()) < config.window_s)
    throw DomainError("window has " + std::to_string(window.size()) + " rows, need " +
                      std::to_string(config.window_s));
  Diagnosis d = classify_aggregate(aggregate_window(window), baseline, config);
  d.transfer_id = std::move(transfer_id);
  d.t0 = t0;
  d.t1 = t0 + static_cast<std::int64_t>(window.size()) - 1;
  return d;
}

MinimalValues normalize(const MinimalValues& v, const BaselineProfile& b) {
  MinimalValues out = v;
  for (Minimal m : kRates) {
    const double mean = at(b.mean, m);
    if (!(mean > 0)) throw DataError("baseline mean of " + name_of(m) + " is zero");
    out[index_of(m)] = at(v, m) / mean;
  }
  if (!(b.bdp_bytes > 0)) throw DataError("baseline BDP is zero");
  out[index_of(Minimal::SenderTcpSendBufMax)] = at(v, Minimal::SenderTcpSendBufMax) / b.bdp_bytes;
  out[index_of(Minimal::ReceiverTcpRecvBufMax)] = at(v, Minimal::ReceiverTcpRecvBufMax) / b.bdp_bytes;
  out[index_of(Minimal::SenderRetransmitted)] = retransmit_ratio(v);
  out[index_of(Minimal::SenderTotalSent)] = 1.0;
  if (!(b.normal_rtt_us > 0)) throw DataError("baseline rtt is zero");
  out[index_of(Minimal::SenderRtt)] = at(v, Minimal::SenderRtt) / b.normal_rtt_us;
  return out;
}

std::vector<DatasetRow> normalize(std::span<const DatasetRow> rows, const BaselineProfile& baseline) {
  std::vector<DatasetRow> out(rows.begin(), rows.end());
  for (auto& r : out) r.metrics = normalize(r.metrics, baseline);
  return out;
}

std::vector<WindowSample> make_windows(std::span<const DatasetRow> rows, std::int64_t window_s) {
  if (window_s < 1) throw DomainError("window_s must be >= 1");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const DatasetRow*>> by_transfer;
  for (const auto& r : rows) {
    auto [it, inserted] = by_transfer.try_emplace(r.transfer_id);
    if (inserted) order.push_back(r.transfer_id);
    it->second.push_back(&r);
  }
  std::vector<WindowSample> out;
  for (const auto& id : order) {
    auto& rs = by_transfer[id];
    std::stable_sort(rs.begin(), rs.end(), [](const DatasetRow* a, const DatasetRow* b) { return a->t < b->t; });
    const std::int64_t base = rs.front()->t;
    std::map<std::int64_t, WindowSample> windows;
    for (const DatasetRow* r : rs) {
      const std::int64_t k = (r->t - base) / window_s;
      auto& w = windows[k];
      if (w.rows.empty()) {
        w.testbed_id = r->testbed_id;
        w.transfer_id = r->transfer_id;
        w.t0 = base + k * window_s;
        w.t1 = w.t0 + window_s - 1;
        w.label = r->label;
      }
      w.rows.push_back(r->metrics);
    }
    for (auto& [k, w] : windows) {
      if (static_cast<std::int64_t>(w.rows.size()) != window_s) continue;
      w.mean = aggregate_window(w.rows);
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<Diagnosis> diagnose_rows(std::span<const DatasetRow> rows, const BaselineProfile& baseline,
                                     const RuleConfig& config) {
  std::vector<Diagnosis> out;
  for (const auto& w : make_windows(rows, config.window_s))
    out.push_back(classify(w.rows, baseline, config, w.transfer_id, w.t0));
  return out;
}

CentroidModel centroid_fit(std::span<const LabeledVector> rows, std::span<const AnomalyClass> required) {
  if (rows.empty()) throw DomainError("centroid fit needs at least one row");
  CentroidModel m;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < kMinimalCount; ++i) m.center[i] += r.x[i] / n;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < kMinimalCount; ++i) {
      const double d = r.x[i] - m.center[i];
      m.scale[i] += d * d / n;
    }
  for (double& s : m.scale) {
    s = std::sqrt(s);
    if (!(s > 0)) s = 1.0;
  }
  std::map<AnomalyClass, std::pair<MinimalValues, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& [sum, count] = acc[r.label];
    for (std::size_t i = 0; i < kMinimalCount; ++i) sum[i] += (r.x[i] - m.center[i]) / m.scale[i];
    ++count;
  }
  for (AnomalyClass c : required)
    if (!acc.contains(c)) throw DomainError("class " + std::string(to_string(c)) + " has no training rows");
  for (auto& [cls, sc] : acc) {
    auto& [sum, count] = sc;
    for (double& x : sum) x /= static_cast<double>(count);
    m.classes.push_back(cls);
    m.centroids.push_back(sum);
  }
  return m;
}

AnomalyClass centroid_predict(const CentroidModel& model, const MinimalValues& x) {
  if (model.classes.empty()) throw DomainError("centroid model is empty");
  double best = std::numeric_limits<double>::infinity();
  AnomalyClass out = model.classes.front();
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    double d = 0;
    for (std::size_t i = 0; i < kMinimalCount; ++i) {
      const double z = (x[i] - model.center[i]) / model.scale[i] - model.centroids[c][i];
      d += z * z;
    }
    if (d < best) {
      best = d;
      out = model.classes[c];
    }
  }
  return out;
}

ScoreReport score(std::span<const AnomalyClass> predictions, std::span<const AnomalyClass> labels) {
  if (predictions.size() != labels.size()) throw DomainError("predictions and labels differ in length");
  ScoreReport r;
  r.total = labels.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_label(predictions[i]) || !is_label(labels[i])) throw DomainError("class outside the label space");
    const auto t = label_index(labels[i]), p = label_index(predictions[i]);
    ++r.confusion[t][p];
    r.present[t] = r.present[p] = true;
    if (t == p) ++correct;
  }
  std::size_t present = 0;
  double f1_sum = 0;
  for (std::size_t c = 0; c < kLabelCount; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t k = 0; k < kLabelCount; ++k) {
      if (k == c) continue;
      fp += r.confusion[k][c];
      fn += r.confusion[c][k];
    }
    auto& s = r.per_class[c];
    s.support = tp + fn;
    s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (r.present[c]) {
      ++present;
      f1_sum += s.f1;
    }
  }
  r.macro_f1 = present ? f1_sum / static_cast<double>(present) : 0.0;
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

nlohmann::ordered_json ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["macro_f1"] = macro_f1;
  j["accuracy"] = accuracy;
  auto& cls = j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < kLabelCount; ++c) {
    if (!present[c]) continue;
    const auto& s = per_class[c];
    cls.push_back({{"class", to_string(static_cast<AnomalyClass>(c))},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support}});
  }
  j["confusion"] = confusion;
  return j;
}

std::string ScoreReport::table() const {
  std::ostringstream o;
  o << std::left << std::setw(32) << "class" << std::right << std::setw(10) << "precision" << std::setw(10)
    << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << '\n';
  o << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < kLabelCount; ++c) {
    if (!present[c]) continue;
    const auto& s = per_class[c];
    o << std::left << std::setw(32) << to_string(static_cast<AnomalyClass>(c)) << std::right << std::setw(10)
      << s.precision << std::setw(10) << s.recall << std::setw(10) << s.f1 << std::setw(10) << s.support << '\n';
  }
  o << std::left << std::setw(32) << "macro" << std::right << std::setw(30) << macro_f1 << std::setw(10) << total
    << '\n';
  return o.str();
}

}  // namespace xfermon
