/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file memcost.hpp
/// @brief Inference memory accounting for layer-by-layer network descriptions.
///
/// Every value is 4 bytes and 1 MB is 2^20 bytes. Per-layer figures are rounded half-up
/// to 0.01 MB, a non-zero figure never shows as less than 0.01, and totals add the
/// rounded per-layer figures. Biases are not counted. Amounts are kept as integer
/// hundredths of a MB so sums are exact.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace hierdecomp {

/// Memory amount in hundredths of a megabyte.
class Megabytes {
 public:
  constexpr Megabytes() = default;
  static constexpr Megabytes from_hundredths(std::int64_t h) { return Megabytes(h); }

  /// Half-up rounding of bytes to 0.01 MB, floored at 0.01 for any non-zero size.
  static constexpr Megabytes from_bytes(std::int64_t bytes) {
    constexpr std::int64_t mb = std::int64_t{1} << 20;
    std::int64_t h = (bytes * 100 + mb / 2) / mb;
    if (bytes > 0 && h == 0) h = 1;
    return Megabytes(h);
  }

  constexpr std::int64_t hundredths() const { return hundredths_; }
  constexpr double value() const { return static_cast<double>(hundredths_) / 100.0; }

  /// Two decimals with trailing zeros dropped: "144", "97.1", "15.63", "0".
  std::string str() const {
    const std::int64_t whole = hundredths_ / 100, frac = hundredths_ % 100;
    std::string s = std::to_string(whole);
    if (frac == 0) return s;
    if (frac % 10 == 0) return s + "." + std::to_string(frac / 10);
    return s + (frac < 10 ? ".0" : ".") + std::to_string(frac);
  }

  /// Always two decimals: "144.00".
  std::string fixed() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(hundredths_ / 100),
                  static_cast<long long>(hundredths_ % 100));
    return buf;
  }

  constexpr Megabytes operator+(Megabytes o) const { return Megabytes(hundredths_ + o.hundredths_); }
  constexpr Megabytes& operator+=(Megabytes o) {
    hundredths_ += o.hundredths_;
    return *this;
  }
  constexpr Megabytes operator*(std::int64_t k) const { return Megabytes(hundredths_ * k); }
  constexpr auto operator<=>(const Megabytes&) const = default;

 private:
  constexpr explicit Megabytes(std::int64_t h) : hundredths_(h) {}
  std::int64_t hundredths_ = 0;
};

enum class LayerKind { kInput, kConv, kRelu, kNorm, kPool, kFc, kProb };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kInput: return "input";
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kNorm: return "norm";
    case LayerKind::kPool: return "pool";
    case LayerKind::kFc: return "fc";
    case LayerKind::kProb: return "prob";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (LayerKind k : {LayerKind::kInput, LayerKind::kConv, LayerKind::kRelu, LayerKind::kNorm, LayerKind::kPool,
                      LayerKind::kFc, LayerKind::kProb})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown layer kind '" + s + "'");
}

inline bool has_weights(LayerKind k) { return k == LayerKind::kConv || k == LayerKind::kFc || k == LayerKind::kProb; }

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kInput;
  int stage = 0;  // weight-layer index shown in the table's first column
  int out_h = 1, out_w = 1, out_c = 1;
  int kernel_h = 0, kernel_w = 0, in_c = 0, out_units = 0;
  int stride = 1;
  bool tunable = false;

  void validate() const {
    require(out_h >= 1 && out_w >= 1 && out_c >= 1, "layer " + name + ": output dims must be >= 1");
    if (has_weights(kind)) {
      require(kernel_h >= 1 && kernel_w >= 1 && in_c >= 1 && out_units >= 1,
              "layer " + name + ": weight dims must be >= 1");
      require(out_units == out_c, "layer " + name + ": output units must equal output channels");
    } else {
      require(kernel_h == 0 && kernel_w == 0 && in_c == 0 && out_units == 0,
              "layer " + name + ": weightless layer has weight dims");
    }
  }
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  void validate() const {
    require(!layers.empty() && layers.front().kind == LayerKind::kInput, "network " + name + " must start with input");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      l.validate();
      if (i == 0) continue;
      require(l.kind != LayerKind::kInput, "network " + name + ": input layer must come first");
      const LayerSpec& p = layers[i - 1];
      switch (l.kind) {
        case LayerKind::kConv:
          require(l.in_c == p.out_c, "layer " + l.name + ": input channels do not match previous layer");
          break;
        case LayerKind::kFc:
        case LayerKind::kProb:
          require(static_cast<long long>(l.kernel_h) * l.kernel_w * l.in_c ==
                      static_cast<long long>(p.out_h) * p.out_w * p.out_c,
                  "layer " + l.name + ": fan-in does not match previous layer size");
          require(l.out_h == 1 && l.out_w == 1, "layer " + l.name + ": fully connected output must be 1x1");
          break;
        case LayerKind::kRelu:
        case LayerKind::kNorm:
          require(l.out_h == p.out_h && l.out_w == p.out_w && l.out_c == p.out_c,
                  "layer " + l.name + ": elementwise layer must keep its input shape");
          break;
        case LayerKind::kPool:
          require(l.out_c == p.out_c, "layer " + l.name + ": pooling must keep the channel count");
          break;
        case LayerKind::kInput:
          break;
      }
    }
  }
};

inline Megabytes layer_data_memory(const LayerSpec& l) {
  return Megabytes::from_bytes(std::int64_t{l.out_h} * l.out_w * l.out_c * 4);
}

inline Megabytes layer_param_memory(const LayerSpec& l) {
  if (!has_weights(l.kind)) return {};
  return Megabytes::from_bytes(std::int64_t{l.kernel_h} * l.kernel_w * l.in_c * l.out_units * 4);
}

struct LayerMemory {
  LayerSpec layer;
  Megabytes data;
  Megabytes params;
};

struct MemoryReport {
  std::string name;
  int batch = 1;
  std::vector<LayerMemory> rows;
  Megabytes data_per_image;  // sum of rounded per-layer data
  Megabytes data;            // data_per_image * batch
  Megabytes params;
  Megabytes total;
};

inline MemoryReport network_memory(const NetworkSpec& spec, int batch = 1) {
  require(batch >= 1, "batch must be >= 1");
  spec.validate();
  MemoryReport r;
  r.name = spec.name;
  r.batch = batch;
  for (const auto& l : spec.layers) {
    LayerMemory row{l, layer_data_memory(l), layer_param_memory(l)};
    r.data_per_image += row.data;
    r.params += row.params;
    r.rows.push_back(row);
  }
  r.data = r.data_per_image * batch;
  r.total = r.params + r.data;
  return r;
}

struct HierarchicalMemory {
  Megabytes hierarchy_params;
  Megabytes assign_params;
  Megabytes shared_data;  // one stage's activations at the batch size
  Megabytes total;
};

/// Both stages read the same input batch and run one after another, so only the larger
/// stage's activation memory is held.
inline HierarchicalMemory hierarchical_memory(const NetworkSpec& hier, const NetworkSpec& assign, int batch) {
  require(batch >= 1, "batch must be >= 1");
  hier.validate();
  assign.validate();
  const auto& a = hier.layers.front();
  const auto& b = assign.layers.front();
  require(a.out_h == b.out_h && a.out_w == b.out_w && a.out_c == b.out_c,
          "hierarchy and class-assignment networks must share the input shape");
  const MemoryReport rh = network_memory(hier, batch);
  const MemoryReport ra = network_memory(assign, batch);
  HierarchicalMemory m;
  m.hierarchy_params = rh.params;
  m.assign_params = ra.params;
  m.shared_data = std::max(rh.data, ra.data);
  m.total = m.hierarchy_params + m.assign_params + m.shared_data;
  return m;
}

// Built-in ImageNet transfer-learning networks (VGG-f trunk with varying FC widths).

/// Fully connected widths and default class count of CNN_TL1..CNN_TL5.
struct TransferVariant {
  int fc6;
  int fc7;
  int classes;
};

inline TransferVariant transfer_variant(int index) {
  switch (index) {
    case 1: return {4096, 4096, 1000};
    case 2: return {4096, 2048, 89};
    case 3: return {2048, 2048, 89};
    case 4: return {2048, 1024, 41};
    case 5: return {1024, 1024, 41};
  }
  throw ValidationError("transfer network index must be 1..5");
}

/// CNN_TL<index>; `classes` overrides the output width. Fine-tuned layers are marked
/// tunable: the last two layers for TL2, all FC layers for TL3, conv4 onward for TL4,
/// conv2 onward for TL5.
inline NetworkSpec transfer_network(int index, int classes = 0) {
  const TransferVariant v = transfer_variant(index);
  if (classes <= 0) classes = v.classes;
  // first tunable layer, counted in weight layers 1..8 (9 = none)
  const int first_tunable = index == 1 ? 9 : index == 2 ? 7 : index == 3 ? 6 : index == 4 ? 4 : 2;
  NetworkSpec n;
  n.name = "CNN_TL" + std::to_string(index);
  auto weightless = [&](std::string name, LayerKind kind, int stage, int h, int w, int c) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.stage = stage;
    l.out_h = h;
    l.out_w = w;
    l.out_c = c;
    n.layers.push_back(l);
  };
  auto weighted = [&](std::string name, LayerKind kind, int stage, int h, int w, int c, int kh, int kw, int in,
                      int stride) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.stage = stage;
    l.out_h = h;
    l.out_w = w;
    l.out_c = c;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.in_c = in;
    l.out_units = c;
    l.stride = stride;
    l.tunable = stage >= first_tunable;
    n.layers.push_back(l);
  };
  weightless("Input", LayerKind::kInput, 0, 224, 224, 3);
  weighted("Conv1", LayerKind::kConv, 1, 54, 54, 64, 11, 11, 3, 4);
  weightless("ReLU1", LayerKind::kRelu, 1, 54, 54, 64);
  weightless("norm1", LayerKind::kNorm, 1, 54, 54, 64);
  weightless("Pool1", LayerKind::kPool, 1, 27, 27, 64);
  weighted("Conv2", LayerKind::kConv, 2, 27, 27, 256, 5, 5, 64, 1);
  weightless("ReLU2", LayerKind::kRelu, 2, 27, 27, 256);
  weightless("norm2", LayerKind::kNorm, 2, 27, 27, 256);
  weightless("Pool2", LayerKind::kPool, 2, 13, 13, 256);
  weighted("Conv3", LayerKind::kConv, 3, 13, 13, 256, 3, 3, 256, 1);
  weightless("ReLU3", LayerKind::kRelu, 3, 13, 13, 256);
  weighted("Conv4", LayerKind::kConv, 4, 13, 13, 256, 3, 3, 256, 1);
  weightless("ReLU4", LayerKind::kRelu, 4, 13, 13, 256);
  weighted("Conv5", LayerKind::kConv, 5, 13, 13, 256, 3, 3, 256, 1);
  weightless("ReLU5", LayerKind::kRelu, 5, 13, 13, 256);
  weightless("Pool5", LayerKind::kPool, 5, 6, 6, 256);
  weighted("Fc6", LayerKind::kFc, 6, 1, 1, v.fc6, 6, 6, 256, 1);
  weightless("ReLU6", LayerKind::kRelu, 6, 1, 1, v.fc6);
  weighted("Fc7", LayerKind::kFc, 7, 1, 1, v.fc7, 1, 1, v.fc6, 1);
  weightless("ReLU7", LayerKind::kRelu, 7, 1, 1, v.fc7);
  weighted("prob", LayerKind::kProb, 8, 1, 1, classes, 1, 1, v.fc7, 1);
  return n;
}

/// Looks up "TL1".."TL5" / "CNN_TL1".."CNN_TL5".
inline NetworkSpec builtin_network(const std::string& name) {
  std::string s = name;
  if (s.rfind("CNN_", 0) == 0) s = s.substr(4);
  if (s.size() == 3 && s.rfind("TL", 0) == 0 && s[2] >= '1' && s[2] <= '5') return transfer_network(s[2] - '0');
  throw ValidationError("unknown built-in network '" + name + "' (expected TL1..TL5)");
}

// I/O

inline nlohmann::json network_to_json(const NetworkSpec& n) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : n.layers) {
    nlohmann::json j{{"name", l.name},
                     {"kind", to_string(l.kind)},
                     {"stage", l.stage},
                     {"out", {l.out_h, l.out_w, l.out_c}},
                     {"stride", l.stride},
                     {"tunable", l.tunable}};
    if (has_weights(l.kind)) j["kernel"] = {l.kernel_h, l.kernel_w, l.in_c, l.out_units};
    layers.push_back(std::move(j));
  }
  return {{"name", n.name}, {"layers", std::move(layers)}};
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  NetworkSpec n;
  try {
    n.name = j.value("name", std::string("network"));
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.name = lj.value("name", std::string());
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.stage = lj.value("stage", 0);
      const auto out = lj.at("out").get<std::vector<int>>();
      require(out.size() == 3, "layer " + l.name + ": out must be [h, w, c]");
      l.out_h = out[0];
      l.out_w = out[1];
      l.out_c = out[2];
      if (lj.contains("kernel")) {
        const auto k = lj["kernel"].get<std::vector<int>>();
        require(k.size() == 4, "layer " + l.name + ": kernel must be [kh, kw, in_c, out_units]");
        l.kernel_h = k[0];
        l.kernel_w = k[1];
        l.in_c = k[2];
        l.out_units = k[3];
      }
      l.stride = lj.value("stride", 1);
      l.tunable = lj.value("tunable", false);
      n.layers.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed network spec: ") + e.what());
  }
  n.validate();
  return n;
}

/// Aligned text table: layer, function, output dims, data MB, weight dims, params MB.
inline std::string format_report_table(const MemoryReport& r) {
  std::ostringstream out;
  out << r.name << "  (batch " << r.batch << ")\n";
  auto line = [&](auto stage, auto name, auto h, auto w, auto c, auto data, auto kh, auto kw, auto in, auto units,
                  auto params) {
    out << std::left << std::setw(6) << stage << std::setw(9) << name << std::right << std::setw(6) << h
        << std::setw(6) << w << std::setw(6) << c << std::setw(12) << data << std::setw(5) << kh << std::setw(5)
        << kw << std::setw(6) << in << std::setw(7) << units << std::setw(12) << params << '\n';
  };
  line("Layer", "Function", "H", "W", "C", "Data(MB)", "kH", "kW", "In", "Out", "Params(MB)");
  for (const auto& row : r.rows) {
    const LayerSpec& l = row.layer;
    line(l.stage, l.name, l.out_h, l.out_w, l.out_c, row.data.str(), l.kernel_h, l.kernel_w, l.in_c, l.out_units,
         row.params.str());
  }
  line("Total", "", "", "", "", r.data_per_image.str(), "", "", "", "", r.params.str());
  out << "Params Memory (MB): " << r.params.str() << '\n'
      << "Data Memory x " << r.batch << " (MB): " << r.data.str() << '\n'
      << "Total Memory (MB): " << r.total.str() << '\n';
  return out.str();
}

inline std::string format_report_csv(const MemoryReport& r) {
  std::ostringstream out;
  out << "network,stage,function,kind,out_h,out_w,out_c,data_mb,kernel_h,kernel_w,in_c,out_units,params_mb,tunable\n";
  for (const auto& row : r.rows) {
    const LayerSpec& l = row.layer;
    out << r.name << ',' << l.stage << ',' << l.name << ',' << to_string(l.kind) << ',' << l.out_h << ',' << l.out_w
        << ',' << l.out_c << ',' << row.data.str() << ',' << l.kernel_h << ',' << l.kernel_w << ',' << l.in_c << ','
        << l.out_units << ',' << row.params.str() << ',' << (l.tunable ? 1 : 0) << '\n';
  }
  out << r.name << ",total,,,,,," << r.data_per_image.str() << ",,,,," << r.params.str() << ",\n";
  return out.str();
}

}  // namespace hierdecomp
