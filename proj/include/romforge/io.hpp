// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_IO_HPP
#define ROMFORGE_IO_HPP

#include <optional>
#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

// Raw little-endian float64, column-major.
void write_f64(const std::string &path, const Matrix &m);
Matrix read_f64(const std::string &path, Eigen::Index rows, Eigen::Index cols);

void write_text(const std::string &path, const std::string &content);
std::string read_text(const std::string &path);

// Snapshot archive: meta.json + snapshots.f64 + optional gram_V.f64.
struct SnapshotArchive
{
  SnapshotSet snapshots;
  InnerProductTag inner = InnerProductTag::H1;
  std::optional<Matrix> gram_v;
};

void save_snapshots(const std::string &dir, const SnapshotSet &snapshots, InnerProductTag inner,
                    const Matrix *gram_v = nullptr);
SnapshotArchive load_snapshots(const std::string &dir);

// Shortest decimal form that reads back to the same double.
std::string format_double(double x);

}  // namespace romforge

#endif  // ROMFORGE_IO_HPP
