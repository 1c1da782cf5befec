#include "ctalign/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctalign/error.hpp"

namespace ctalign::io {

using nlohmann::json;

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

std::size_t line_of_key(const std::string& text, const std::string& key) {
  const std::size_t at = text.find("\"" + key + "\"");
  return at == std::string::npos ? 1 : line_of_offset(text, at);
}

std::vector<double> real_array(const json& j, const std::string& key,
                               const std::string& text) {
  if (!j.is_array()) throw ParseError("'" + key + "' must be an array", line_of_key(text, key));
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) {
      throw ParseError("'" + key + "' must hold only numbers", line_of_key(text, key));
    }
    out.push_back(v.get<double>());
  }
  return out;
}

std::size_t count_field(const json& j, const std::string& key, const std::string& text) {
  if (!j.contains(key)) throw ParseError("missing field '" + key + "'", 1);
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ParseError("'" + key + "' must be a nonnegative integer", line_of_key(text, key));
  }
  return v.get<std::size_t>();
}

}  // namespace

LoadedPointSet parse_point_set(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  if (!j.is_object()) throw ParseError("embedding file must hold a JSON object", 1);
  for (const auto& [key, value] : j.items()) {
    if (key != "dim" && key != "count" && key != "weights" && key != "data") {
      throw ParseError("unknown field '" + key + "'", line_of_key(text, key));
    }
  }
  const std::size_t dim = count_field(j, "dim", text);
  const std::size_t count = count_field(j, "count", text);
  if (!j.contains("data")) throw ParseError("missing field 'data'", 1);
  std::vector<double> data = real_array(j.at("data"), "data", text);
  if (dim == 0 || count == 0) {
    throw ShapeError("embedding file needs dim >= 1 and count >= 1");
  }
  if (data.size() != dim * count) {
    throw ShapeError("embedding file declares " + std::to_string(dim) + "x" +
                     std::to_string(count) + " but holds " +
                     std::to_string(data.size()) + " values");
  }
  LoadedPointSet out;
  SimplexVector weights;
  if (j.contains("weights") && !j.at("weights").is_null()) {
    std::vector<double> w = real_array(j.at("weights"), "weights", text);
    if (w.size() != count) {
      throw ShapeError("embedding file has " + std::to_string(count) + " points but " +
                       std::to_string(w.size()) + " weights");
    }
    weights = SimplexVector(std::move(w));
  } else {
    weights = SimplexVector::uniform(count);
    out.weights_defaulted = true;
  }
  out.set = make_point_set(Matrix(dim, count, std::move(data)), std::move(weights));
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

LoadedPointSet read_point_set(const std::filesystem::path& path) {
  return parse_point_set(read_text(path));
}

json point_set_to_json(const DiscretePointSet& set) {
  const auto data = set.support().data();
  const auto w = set.weights().weights();
  return json{{"dim", set.dim()},
              {"count", set.size()},
              {"weights", std::vector<double>(w.begin(), w.end())},
              {"data", std::vector<double>(data.begin(), data.end())}};
}

std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  // Avoid "-0.000000".
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_fixed6(m(r, c));
    }
    out += '\n';
  }
  return out;
}

json matrix_to_json(const Matrix& m) {
  const auto data = m.data();
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(data.begin(), data.end())}};
}

Matrix matrix_from_json(const json& j) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad matrix record: ") + e.what(), 0);
  }
}

json params_to_json(const ToyModelParams& params) {
  json layers = json::array();
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    layers.push_back({{"weight", matrix_to_json(params.encoder_weights[l])},
                      {"bias", params.encoder_biases[l]}});
  }
  json generators = json::array();
  for (const auto& g : params.label_generators) generators.push_back(matrix_to_json(g));
  json nav{{"log_temperature", params.navigator.log_temperature}};
  if (params.navigator.has_projection()) {
    nav["patch_projection"] = matrix_to_json(*params.navigator.patch_projection);
    nav["label_projection"] = matrix_to_json(*params.navigator.label_projection);
  }
  return json{{"encoder", layers},
              {"label_table", matrix_to_json(params.label_table)},
              {"label_generators", generators},
              {"head",
               {{"w1", matrix_to_json(params.head_w1)},
                {"b1", params.head_b1},
                {"w2", matrix_to_json(params.head_w2)},
                {"b2", params.head_b2}}},
              {"navigator", nav}};
}

ToyModelParams params_from_json(const json& j) {
  try {
    ToyModelParams p;
    for (const auto& layer : j.at("encoder")) {
      p.encoder_weights.push_back(matrix_from_json(layer.at("weight")));
      p.encoder_biases.push_back(layer.at("bias").get<std::vector<double>>());
    }
    p.label_table = matrix_from_json(j.at("label_table"));
    for (const auto& g : j.at("label_generators")) p.label_generators.push_back(matrix_from_json(g));
    const json& head = j.at("head");
    p.head_w1 = matrix_from_json(head.at("w1"));
    p.head_b1 = head.at("b1").get<std::vector<double>>();
    p.head_w2 = matrix_from_json(head.at("w2"));
    p.head_b2 = head.at("b2").get<std::vector<double>>();
    const json& nav = j.at("navigator");
    p.navigator.log_temperature = nav.at("log_temperature").get<double>();
    if (nav.contains("patch_projection")) {
      p.navigator.patch_projection = matrix_from_json(nav.at("patch_projection"));
      p.navigator.label_projection = matrix_from_json(nav.at("label_projection"));
    }
    if (p.encoder_weights.empty() || p.label_generators.size() + 1 != p.encoder_weights.size()) {
      throw ShapeError("checkpoint layer counts disagree");
    }
    p.navigator.validate();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint parameters: ") + e.what(), 0);
  }
}

json dataset_to_json(std::span<const SyntheticSample> samples) {
  json out = json::array();
  for (const auto& s : samples) {
    std::vector<int> y(s.y.values().begin(), s.y.values().end());
    out.push_back({{"patches", matrix_to_json(s.patches)},
                   {"y", y},
                   {"assignment", s.assignment}});
  }
  return out;
}

std::vector<SyntheticSample> dataset_from_json(const json& j) {
  try {
    std::vector<SyntheticSample> out;
    for (const auto& rec : j) {
      SyntheticSample s;
      s.patches = matrix_from_json(rec.at("patches"));
      s.y = LabelVector::from_ints(rec.at("y").get<std::vector<int>>());
      s.assignment = rec.at("assignment").get<std::vector<int>>();
      if (s.assignment.size() != s.patches.cols()) {
        throw ShapeError("sample assignment length differs from its patch count");
      }
      out.push_back(std::move(s));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad dataset record: ") + e.what(), 0);
  }
}

std::string trace_to_csv(std::span<const EpochRecord> trace) {
  std::string out = "epoch,total,lct,asl,val_map\n";
  for (const auto& r : trace) {
    out += std::to_string(r.epoch) + ',' + format_fixed6(r.total) + ',' +
           format_fixed6(r.lct) + ',' + format_fixed6(r.asl) + ',' +
           (std::isnan(r.val_map) ? std::string("nan") : format_fixed6(r.val_map)) + '\n';
  }
  return out;
}

std::string metrics_csv_header() { return "run,regime,mAP,CP,CR,CF1,OP,OR,OF1\n"; }

std::string metrics_csv_row(const std::string& label, const MetricsReport& r) {
  return label + ',' + r.regime.name() + ',' + format_fixed6(r.map) + ',' +
         format_fixed6(r.cp) + ',' + format_fixed6(r.cr) + ',' + format_fixed6(r.cf1) + ',' +
         format_fixed6(r.op) + ',' + format_fixed6(r.orc) + ',' + format_fixed6(r.of1) + '\n';
}

}  // namespace ctalign::io
