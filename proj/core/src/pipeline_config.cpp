#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lframes/mp.hpp"

namespace lframes {

using json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg, int layer) {
  if (layer >= 0) throw PipelineConfigError("layer " + std::to_string(layer) + ": " + msg, layer);
  throw PipelineConfigError(msg, layer);
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where, int layer) {
  if (!j.is_object()) fail(where + " must be a JSON object", layer);
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail("unknown key '" + key + "' in " + where, layer);
}

template <typename T>
T get(const json& j, const char* key, T fallback, int layer) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string("key '") + key + "' has the wrong type", layer);
  }
}

std::vector<int> get_hidden(const json& j, const char* key, std::vector<int> fallback, int layer) {
  if (!j.contains(key)) return fallback;
  const json& h = j.at(key);
  std::vector<int> out;
  if (h.is_number_integer()) {
    out.push_back(h.get<int>());
  } else if (h.is_array()) {
    for (const auto& v : h) {
      if (!v.is_number_integer()) fail(std::string("'") + key + "' entries must be integers", layer);
      out.push_back(v.get<int>());
    }
  } else {
    fail(std::string("'") + key + "' must be an integer or a list of integers", layer);
  }
  for (int w : out)
    if (w <= 0) fail(std::string("'") + key + "' widths must be positive", layer);
  return out;
}

RepSpec get_rep(const json& j, const char* key, int layer) {
  if (!j.at(key).is_string()) fail(std::string("'") + key + "' must be a rep string", layer);
  try {
    return RepSpec::parse(j.at(key).get<std::string>());
  } catch (const RepParseError& e) {
    fail(std::string("'") + key + "': " + e.what(), layer);
  }
}

json hidden_json(const std::vector<int>& h) { return json(h); }

}  // namespace

PipelineConfig PipelineConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("malformed JSON: ") + e.what(), -1);
  }
  check_keys(j,
             {"rho_in", "rho_out", "mode", "radial_k", "norm", "normalize_output", "pool_anchor_farthest",
              "frames", "refine_hidden", "layers"},
             "pipeline config", -1);
  PipelineConfig c;
  if (j.contains("rho_in")) c.rho_in = get_rep(j, "rho_in", -1);
  if (j.contains("rho_out")) c.rho_out = get_rep(j, "rho_out", -1);
  try {
    c.mode = message_mode_from_string(get<std::string>(j, "mode", "tensorial", -1));
  } catch (const PipelineConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(e.what(), -1);
  }
  c.radial_k = get<int>(j, "radial_k", c.radial_k, -1);
  c.norm = get<bool>(j, "norm", c.norm, -1);
  c.normalize_output = get<bool>(j, "normalize_output", c.normalize_output, -1);
  c.pool_anchor_farthest = get<bool>(j, "pool_anchor_farthest", c.pool_anchor_farthest, -1);
  c.refine_hidden = get_hidden(j, "refine_hidden", c.refine_hidden, -1);
  if (j.contains("frames")) {
    const json& f = j.at("frames");
    check_keys(f, {"type", "radius", "hidden", "envelope_p"}, "frames", -1);
    try {
      c.frames.type = frame_provenance_from_string(get<std::string>(f, "type", "learned", -1));
    } catch (const PipelineConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      fail(e.what(), -1);
    }
    c.frames.radius = get<double>(f, "radius", c.frames.radius, -1);
    c.frames.hidden = get_hidden(f, "hidden", c.frames.hidden, -1);
    c.frames.envelope_p = get<int>(f, "envelope_p", c.frames.envelope_p, -1);
  }
  if (j.contains("layers")) {
    if (!j.at("layers").is_array()) fail("'layers' must be a list", -1);
    int index = 0;
    for (const auto& l : j.at("layers")) {
      check_keys(l, {"type", "rep", "hidden", "radius", "fraction", "refine", "mode", "aggregation", "dropout"}, "layer",
                 index);
      if (!l.contains("type")) fail("missing 'type'", index);
      LayerSpec s;
      try {
        s.type = layer_type_from_string(get<std::string>(l, "type", "", index));
        if (l.contains("mode")) s.mode = message_mode_from_string(get<std::string>(l, "mode", "", index));
        s.aggregation = aggregation_from_string(get<std::string>(l, "aggregation", "max", index));
      } catch (const PipelineConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        fail(e.what(), index);
      }
      if (l.contains("rep")) s.rep = get_rep(l, "rep", index);
      s.hidden = get_hidden(l, "hidden", s.hidden, index);
      s.radius = get<double>(l, "radius", s.radius, index);
      s.fraction = get<double>(l, "fraction", s.fraction, index);
      s.refine = get<bool>(l, "refine", s.refine, index);
      s.dropout = get<double>(l, "dropout", s.dropout, index);
      c.layers.push_back(std::move(s));
      ++index;
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'", -1);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string PipelineConfig::to_json_string() const {
  json j;
  j["rho_in"] = rho_in.to_string();
  j["rho_out"] = rho_out.to_string();
  j["mode"] = to_string(mode);
  j["radial_k"] = radial_k;
  j["norm"] = norm;
  j["normalize_output"] = normalize_output;
  j["pool_anchor_farthest"] = pool_anchor_farthest;
  j["refine_hidden"] = hidden_json(refine_hidden);
  j["frames"] = {{"type", to_string(frames.type)},
                 {"radius", frames.radius},
                 {"hidden", hidden_json(frames.hidden)},
                 {"envelope_p", frames.envelope_p}};
  json layers_json = json::array();
  for (const auto& l : layers) {
    json o;
    o["type"] = to_string(l.type);
    if (l.rep) o["rep"] = l.rep->to_string();
    o["hidden"] = hidden_json(l.hidden);
    o["radius"] = l.radius;
    o["fraction"] = l.fraction;
    o["refine"] = l.refine;
    if (l.mode) o["mode"] = to_string(*l.mode);
    o["aggregation"] = to_string(l.aggregation);
    if (l.dropout > 0) o["dropout"] = l.dropout;
    layers_json.push_back(std::move(o));
  }
  j["layers"] = std::move(layers_json);
  return j.dump(2);
}

std::vector<LayerPlan> plan_layers(const PipelineConfig& cfg) {
  if (cfg.rho_in.dim() != 3 || cfg.rho_out.dim() != 3) fail("representations must be in dimension 3", -1);
  if (cfg.rho_in.empty()) fail("rho_in must not be empty", -1);
  if (cfg.rho_out.empty()) fail("rho_out must not be empty", -1);
  if (cfg.radial_k < 2) fail("radial_k must be at least 2", -1);
  if (!(cfg.frames.radius > 0)) fail("frame radius must be positive", -1);
  if (cfg.frames.envelope_p < 1) fail("envelope_p must be positive", -1);

  std::vector<LayerPlan> plans;
  std::vector<RepSpec> stack{cfg.rho_in};
  bool pooled = false;
  const int n = static_cast<int>(cfg.layers.size());
  for (int i = 0; i < n; ++i) {
    const LayerSpec& l = cfg.layers[i];
    LayerPlan p;
    p.in = stack.back();
    if (l.type == LayerType::output) {
      if (i != n - 1) fail("an output layer must be last", i);
      if (l.refine) fail("output layers cannot refine frames", i);
      p.out = cfg.rho_out;
    } else {
      if (!l.rep) fail(std::string("missing 'rep' for ") + to_string(l.type) + " layer", i);
      if (l.rep->dim() != 3 || l.rep->empty()) fail("'rep' must be a non-empty 3D representation", i);
      p.out = *l.rep;
    }
    if (!(l.dropout >= 0 && l.dropout < 1)) fail("'dropout' must lie in [0, 1)", i);
    if (l.dropout > 0 && l.type != LayerType::output) fail("dropout is only supported on output layers", i);
    if (pooled && l.type != LayerType::output) fail("only an output layer may follow a pool layer", i);
    switch (l.type) {
      case LayerType::message:
      case LayerType::encoder:
        if (!(l.radius > 0)) fail("'radius' must be positive", i);
        if (!(l.fraction > 0 && l.fraction <= 1)) fail("'fraction' must lie in (0, 1]", i);
        if (l.type == LayerType::message && l.fraction != 1.0) fail("message layers keep every node", i);
        break;
      case LayerType::decoder:
        if (stack.size() < 2) fail("decoder has no cached encoder level to return to", i);
        p.skip = stack[stack.size() - 2];
        break;
      case LayerType::pool:
        if (!(l.radius > 0)) fail("'radius' must be positive", i);
        if (l.refine) fail("pool layers cannot refine frames", i);
        break;
      case LayerType::output:
        break;
    }
    switch (l.type) {
      case LayerType::encoder: stack.push_back(p.out); break;
      case LayerType::decoder:
        stack.pop_back();
        stack.back() = p.out;
        break;
      case LayerType::pool:
        pooled = true;
        stack.back() = p.out;
        break;
      default: stack.back() = p.out; break;
    }
    plans.push_back(std::move(p));
  }
  if (!pooled && stack.size() != 1)
    fail("pipeline ends below full resolution; add decoders or a pool layer", n - 1);
  if (!(stack.back() == cfg.rho_out))
    fail("final representation " + stack.back().to_string() + " does not match rho_out " +
             cfg.rho_out.to_string(),
         n - 1);
  return plans;
}

void PipelineConfig::validate() const { plan_layers(*this); }

PipelineConfig PipelineConfig::with_mode(MessageMode m) const {
  PipelineConfig c = *this;
  c.mode = m;
  for (auto& l : c.layers) l.mode.reset();
  return c;
}

PipelineConfig PipelineConfig::with_frames(FrameProvenance f) const {
  PipelineConfig c = *this;
  c.frames.type = f;
  return c;
}

PipelineConfig PipelineConfig::with_refine(bool on) const {
  PipelineConfig c = *this;
  for (auto& l : c.layers)
    if (l.type == LayerType::encoder || l.type == LayerType::message || l.type == LayerType::decoder) l.refine = on;
  return c;
}

}  // namespace lframes
