#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqba/dataset.hpp"
#include "sqba/errors.hpp"
#include "sqba/network.hpp"

// On-disk format, shared by models and datasets: a single JSON header
// line terminated by '\n', followed by a raw little-endian float32
// payload (and, for datasets, one uint8 label per image).
static_assert(std::endian::native == std::endian::little,
              "file payloads are little-endian float32; big-endian hosts are unsupported");

namespace sqba {

inline constexpr int kFormatVersion = 1;

namespace detail {

inline void write_f32(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::vector<float> read_f32(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<float> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != n * sizeof(float))
    throw FormatError("truncated payload while reading " + what);
  return v;
}

inline nlohmann::json read_header(std::istream& is, const std::string& expected_kind) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("missing header line");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad header json: ") + e.what());
  }
  if (!h.contains("format_version") || !h["format_version"].is_number_integer())
    throw FormatError("header missing format_version");
  const int ver = h["format_version"].get<int>();
  if (ver != kFormatVersion)
    throw FormatError("unsupported format_version " + std::to_string(ver) + ", expected " +
                      std::to_string(kFormatVersion));
  if (!h.contains("kind") || h["kind"].get<std::string>() != expected_kind)
    throw FormatError("expected kind \"" + expected_kind + "\"");
  return h;
}

inline void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after payload");
}

inline nlohmann::json shape_json(Shape s) {
  return {{"channels", s.channels}, {"height", s.height}, {"width", s.width}};
}

inline Shape shape_from_json(const nlohmann::json& j) {
  try {
    return Shape{j.at("channels").get<int>(), j.at("height").get<int>(),
                 j.at("width").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad shape in header: ") + e.what());
  }
}

inline nlohmann::json range_json(DataRange r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

inline DataRange range_from_json(const nlohmann::json& j) {
  try {
    return DataRange{j.at("lo").get<double>(), j.at("hi").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad range in header: ") + e.what());
  }
}

}  // namespace detail

inline void save_network(const Network& net, std::ostream& os) {
  validate(net);
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      layers.push_back({{"type", "dense"}, {"in", d->in}, {"out", d->out}});
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      layers.push_back({{"type", "conv"},
                        {"in_c", c->in_c},
                        {"out_c", c->out_c},
                        {"k", c->k},
                        {"in_h", c->in_h},
                        {"in_w", c->in_w}});
    } else {
      layers.push_back({{"type", "relu"}});
    }
  }
  nlohmann::json h = {{"format_version", kFormatVersion},
                      {"kind", "network"},
                      {"input", detail::shape_json(net.input)},
                      {"num_classes", net.num_classes},
                      {"range", detail::range_json(net.range)},
                      {"layers", layers}};
  os << h.dump() << '\n';
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      detail::write_f32(os, d->w);
      detail::write_f32(os, d->b);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      detail::write_f32(os, c->w);
      detail::write_f32(os, c->b);
    }
  }
  if (!os) throw FormatError("write failed");
}

inline Network load_network(std::istream& is) {
  const nlohmann::json h = detail::read_header(is, "network");
  Network net;
  try {
    net.input = detail::shape_from_json(h.at("input"));
    net.num_classes = h.at("num_classes").get<int>();
    net.range = detail::range_from_json(h.at("range"));
    for (const auto& lj : h.at("layers")) {
      const std::string type = lj.at("type").get<std::string>();
      if (type == "dense") {
        DenseLayer d;
        d.in = lj.at("in").get<int>();
        d.out = lj.at("out").get<int>();
        if (d.in <= 0 || d.out <= 0) throw FormatError("bad dense dimensions");
        net.layers.emplace_back(std::move(d));
      } else if (type == "conv") {
        ConvLayer c;
        c.in_c = lj.at("in_c").get<int>();
        c.out_c = lj.at("out_c").get<int>();
        c.k = lj.at("k").get<int>();
        c.in_h = lj.at("in_h").get<int>();
        c.in_w = lj.at("in_w").get<int>();
        if (c.in_c <= 0 || c.out_c <= 0 || c.k <= 0 || c.k > c.in_h || c.k > c.in_w)
          throw FormatError("bad conv dimensions");
        net.layers.emplace_back(std::move(c));
      } else if (type == "relu") {
        net.layers.emplace_back(ReluLayer{});
      } else {
        throw FormatError("unknown layer type \"" + type + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad network header: ") + e.what());
  }
  for (Layer& layer : net.layers) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      d->w = detail::read_f32(is, static_cast<std::size_t>(d->in) * d->out, "dense weights");
      d->b = detail::read_f32(is, static_cast<std::size_t>(d->out), "dense bias");
    } else if (auto* c = std::get_if<ConvLayer>(&layer)) {
      c->w = detail::read_f32(is, static_cast<std::size_t>(c->out_c) * c->in_c * c->k * c->k,
                              "conv weights");
      c->b = detail::read_f32(is, static_cast<std::size_t>(c->out_c), "conv bias");
    }
  }
  detail::expect_eof(is);
  try {
    validate(net);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("inconsistent network header: ") + e.what());
  }
  return net;
}

inline void save_dataset(const Dataset& ds, std::ostream& os) {
  nlohmann::json h = {{"format_version", kFormatVersion},
                      {"kind", "dataset"},
                      {"count", ds.size()},
                      {"shape", detail::shape_json(ds.shape)},
                      {"num_classes", ds.num_classes},
                      {"range", detail::range_json(ds.range)}};
  os << h.dump() << '\n';
  std::vector<float> buf(ds.shape.size());
  for (const Tensor& img : ds.images) {
    if (img.shape != ds.shape) throw FormatError("dataset image shape mismatch");
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.v[i]);
    detail::write_f32(os, buf);
  }
  std::vector<std::uint8_t> labels(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] > 255 || ds.labels[i] >= ds.num_classes)
      throw FormatError("dataset label out of range");
    labels[i] = static_cast<std::uint8_t>(ds.labels[i]);
  }
  os.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
  if (!os) throw FormatError("write failed");
}

inline Dataset load_dataset(std::istream& is) {
  const nlohmann::json h = detail::read_header(is, "dataset");
  Dataset ds;
  std::size_t count = 0;
  try {
    count = h.at("count").get<std::size_t>();
    ds.shape = detail::shape_from_json(h.at("shape"));
    ds.num_classes = h.at("num_classes").get<int>();
    ds.range = detail::range_from_json(h.at("range"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what());
  }
  if (ds.num_classes < 2) throw FormatError("dataset needs at least 2 classes");
  const std::size_t dim = ds.shape.size();
  if (dim == 0) throw FormatError("dataset has empty shape");
  ds.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::vector<float> buf = detail::read_f32(is, dim, "image pixels");
    Tensor img(ds.shape, 0.0);
    for (std::size_t j = 0; j < dim; ++j) img.v[j] = static_cast<double>(buf[j]);
    ds.images.push_back(std::move(img));
  }
  std::vector<std::uint8_t> labels(count);
  is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(is.gcount()) != count)
    throw FormatError("truncated payload while reading labels");
  detail::expect_eof(is);
  ds.labels.reserve(count);
  for (std::uint8_t l : labels) {
    if (l >= ds.num_classes) throw FormatError("dataset label out of range");
    ds.labels.push_back(static_cast<int>(l));
  }
  return ds;
}

// Filename conveniences. Open failures surface as FormatError.

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  save_network(net, os);
}

inline Network load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  return load_network(is);
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  save_dataset(ds, os);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  return load_dataset(is);
}

}  // namespace sqba
