// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"

namespace kvunion {

/// Per-(batch, execution-group) KV block lists in CSR form.
///
/// Pseudo-row r = b * n_groups + g owns kv_indices[kv_indptr[r], kv_indptr[r+1]).
/// Tables produced by build_block_table list each row ascending; tables
/// assembled by hand (from_rows / from_csr) may use any order, and every
/// executor walks a row in stored order.
class KVBlockTable {
public:
    KVBlockTable() : indptr_{0} {}

    static KVBlockTable from_csr(std::size_t batch, std::size_t n_groups, std::size_t n_kvblocks,
                                 std::vector<std::uint32_t> indptr, std::vector<std::uint32_t> indices) {
        KVBlockTable t;
        t.batch_ = batch;
        t.n_groups_ = n_groups;
        t.n_kvblocks_ = n_kvblocks;
        t.indptr_ = std::move(indptr);
        t.indices_ = std::move(indices);
        t.validate();
        return t;
    }

    static KVBlockTable from_rows(std::size_t batch, std::size_t n_groups, std::size_t n_kvblocks,
                                  const std::vector<std::vector<std::uint32_t>>& rows) {
        KVUNION_CHECK(rows.size() == batch * n_groups, ShapeError, "block_table: row count mismatch");
        std::vector<std::uint32_t> indptr{0};
        std::vector<std::uint32_t> indices;
        for (const auto& r : rows) {
            indices.insert(indices.end(), r.begin(), r.end());
            indptr.push_back(static_cast<std::uint32_t>(indices.size()));
        }
        return from_csr(batch, n_groups, n_kvblocks, std::move(indptr), std::move(indices));
    }

    std::size_t batch() const noexcept { return batch_; }
    std::size_t n_groups() const noexcept { return n_groups_; }
    std::size_t n_kvblocks() const noexcept { return n_kvblocks_; }
    std::size_t n_rows() const noexcept { return batch_ * n_groups_; }

    const std::vector<std::uint32_t>& kv_indptr() const noexcept { return indptr_; }
    const std::vector<std::uint32_t>& kv_indices() const noexcept { return indices_; }

    std::span<const std::uint32_t> row(std::size_t r) const {
        KVUNION_CHECK(r < n_rows(), IndexError, "block_table: row " + std::to_string(r) + " out of range");
        return std::span(indices_).subspan(indptr_[r], indptr_[r + 1] - indptr_[r]);
    }
    std::span<const std::uint32_t> row(std::size_t b, std::size_t g) const {
        KVUNION_CHECK(b < batch_ && g < n_groups_, IndexError, "block_table: (b, g) out of range");
        return row(b * n_groups_ + g);
    }

    bool rows_ascending() const {
        for (std::size_t r = 0; r < n_rows(); ++r) {
            auto blocks = row(r);
            for (std::size_t k = 1; k < blocks.size(); ++k) {
                if (blocks[k - 1] >= blocks[k]) return false;
            }
        }
        return true;
    }

    /// Bytes of the CSR arrays at kIndexBytes per entry.
    std::uint64_t metadata_bytes() const noexcept { return kIndexBytes * (indices_.size() + indptr_.size()); }

    /// Text form: "B n_groups n_kvblocks", then kv_indptr, then kv_indices,
    /// one space-delimited line each.
    void dump(std::ostream& os) const {
        os << batch_ << ' ' << n_groups_ << ' ' << n_kvblocks_ << '\n';
        write_line(os, indptr_);
        write_line(os, indices_);
    }

    static KVBlockTable parse(std::istream& is) {
        std::string line;
        KVUNION_CHECK(static_cast<bool>(std::getline(is, line)), ValidationError, "block_table: missing header");
        std::istringstream hdr(line);
        std::size_t b = 0, g = 0, n = 0;
        KVUNION_CHECK(static_cast<bool>(hdr >> b >> g >> n), ValidationError, "block_table: malformed header");
        auto indptr = read_line(is);
        auto indices = read_line(is);
        return from_csr(b, g, n, std::move(indptr), std::move(indices));
    }

    bool operator==(const KVBlockTable&) const = default;

private:
    void validate() const {
        KVUNION_CHECK(indptr_.size() == n_rows() + 1, ShapeError, "block_table: kv_indptr length must be rows + 1");
        KVUNION_CHECK(indptr_.front() == 0, ValidationError, "block_table: kv_indptr[0] must be 0");
        for (std::size_t r = 0; r < n_rows(); ++r) {
            KVUNION_CHECK(indptr_[r] <= indptr_[r + 1], ValidationError, "block_table: kv_indptr must be non-decreasing");
        }
        KVUNION_CHECK(indptr_.back() == indices_.size(), ShapeError, "block_table: kv_indptr does not cover kv_indices");
        for (auto j : indices_) {
            KVUNION_CHECK(j < n_kvblocks_, IndexError, "block_table: block index " + std::to_string(j) + " out of range");
        }
    }

    static void write_line(std::ostream& os, const std::vector<std::uint32_t>& xs) {
        for (std::size_t k = 0; k < xs.size(); ++k) os << (k ? " " : "") << xs[k];
        os << '\n';
    }

    static std::vector<std::uint32_t> read_line(std::istream& is) {
        std::string line;
        KVUNION_CHECK(static_cast<bool>(std::getline(is, line)), ValidationError, "block_table: truncated dump");
        std::istringstream ls(line);
        std::vector<std::uint32_t> xs;
        std::uint64_t x = 0;
        while (ls >> x) xs.push_back(static_cast<std::uint32_t>(x));
        return xs;
    }

    std::size_t batch_ = 0;
    std::size_t n_groups_ = 0;
    std::size_t n_kvblocks_ = 0;
    std::vector<std::uint32_t> indptr_;
    std::vector<std::uint32_t> indices_;
};

}  // namespace kvunion
