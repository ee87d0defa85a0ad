// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace romforge
{

static_assert(std::endian::native == std::endian::little,
              "raw float64 archives assume a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

void write_f64(const std::string &path, const Matrix &m)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw ConfigError("cannot open '" + path + "' for writing");
  }
  out.write(reinterpret_cast<const char *>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out)
  {
    throw ConfigError("failed to write '" + path + "'");
  }
}

Matrix read_f64(const std::string &path, Eigen::Index rows, Eigen::Index cols)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw ConfigError("cannot open '" + path + "'");
  }
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * sizeof(double);
  if (fs::file_size(path) != expected)
  {
    std::ostringstream msg;
    msg << "'" << path << "' holds " << fs::file_size(path) << " bytes, expected " << expected;
    throw ConfigError(msg.str());
  }
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(expected));
  return m;
}

void write_text(const std::string &path, const std::string &content)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    throw ConfigError("cannot open '" + path + "' for writing");
  }
  out << content;
}

std::string read_text(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw ConfigError("cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x)
{
  if (std::isinf(x))
  {
    return x > 0 ? "inf" : "-inf";
  }
  if (std::isnan(x))
  {
    return "nan";
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void save_snapshots(const std::string &dir, const SnapshotSet &snapshots, InnerProductTag inner,
                    const Matrix *gram_v)
{
  snapshots.validate();
  fs::create_directories(dir);
  const FomSpec &s = snapshots.spec;
  json meta;
  meta["kind"] = to_string(s.kind);
  meta["n_h"] = snapshots.dim();
  meta["K"] = snapshots.size();
  meta["dt"] = s.dt;
  meta["dt_s"] = s.dt_s;
  meta["T0"] = s.T0;
  meta["mu"] = snapshots.mu;
  meta["inner_product"] = to_string(inner);
  meta["T"] = s.T;
  meta["length"] = s.length;
  meta["g0"] = s.g0;
  meta["g1"] = s.g1;
  meta["mu_lb"] = s.mu_lb;
  meta["mu_ub"] = s.mu_ub;
  meta["times"] = snapshots.times;
  write_text((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
  write_f64((fs::path(dir) / "snapshots.f64").string(), snapshots.states);
  if (gram_v)
  {
    write_f64((fs::path(dir) / "gram_V.f64").string(), *gram_v);
  }
}

SnapshotArchive load_snapshots(const std::string &dir)
{
  json meta;
  try
  {
    meta = json::parse(read_text((fs::path(dir) / "meta.json").string()));
  }
  catch (const json::exception &e)
  {
    throw ConfigError("malformed meta.json in '" + dir + "': " + e.what());
  }
  for (const char *key : {"kind", "n_h", "K", "dt", "dt_s", "T0", "mu", "inner_product"})
  {
    if (!meta.contains(key))
    {
      throw ConfigError(std::string("meta.json lacks required key '") + key + "'");
    }
  }
  SnapshotArchive out;
  FomSpec &s = out.snapshots.spec;
  try
  {
    s.kind = fom_kind_from_string(meta["kind"].get<std::string>());
    s.n_h = meta["n_h"].get<int>();
    s.K = meta["K"].get<int>();
    s.dt = meta["dt"].get<double>();
    s.dt_s = meta["dt_s"].get<double>();
    s.T0 = meta["T0"].get<double>();
    s.T = meta.value("T", s.T0 + s.K * s.dt_s);
    s.length = meta.value("length", 1.0);
    s.g0 = meta.value("g0", 0.0);
    s.g1 = meta.value("g1", 0.0);
    out.snapshots.mu = meta["mu"].get<double>();
    s.mu_lb = meta.value("mu_lb", out.snapshots.mu);
    s.mu_ub = meta.value("mu_ub", out.snapshots.mu);
    out.inner = inner_product_from_string(meta["inner_product"].get<std::string>());
    if (meta.contains("times"))
    {
      out.snapshots.times = meta["times"].get<std::vector<double>>();
    }
    else
    {
      for (int k = 1; k <= s.K; ++k)
      {
        out.snapshots.times.push_back(s.T0 + k * s.dt_s);
      }
    }
  }
  catch (const json::exception &e)
  {
    throw ConfigError("malformed meta.json in '" + dir + "': " + e.what());
  }
  if (s.n_h < 1 || s.K < 1)
  {
    throw ConfigError("meta.json has non-positive n_h or K");
  }
  out.snapshots.states = read_f64((fs::path(dir) / "snapshots.f64").string(), s.n_h, s.K);
  const fs::path gram = fs::path(dir) / "gram_V.f64";
  if (fs::exists(gram))
  {
    out.gram_v = read_f64(gram.string(), s.n_h, s.n_h);
  }
  out.snapshots.validate();
  return out;
}

}  // namespace romforge
