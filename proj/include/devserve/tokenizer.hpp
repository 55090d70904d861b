#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "devserve/errors.hpp"
#include "devserve/ring_buffer.hpp"  // TokenId

namespace devserve {

// ---- byte classification ---------------------------------------------------

// Pre-tokenization splits on byte-class boundaries: whitespace, letters
// (anything >= 0x80 counts as a letter so UTF-8 continuation bytes stay glued
// to their word), digits, and everything else.  A single space attaches to
// the run that follows it.
enum class ByteClass : std::uint8_t { ws = 0, alpha = 1, digit = 2, other = 3 };

extern const std::array<std::uint8_t, 256> kByteClassTable;

inline ByteClass byte_class(std::uint8_t b) {
    return static_cast<ByteClass>(kByteClassTable[b]);
}

struct Piece {
    std::uint32_t offset = 0;
    std::uint32_t length = 0;
};

// Scalar reference classifier; the ground truth for boundary placement.
void pretokenize_scalar(std::string_view text, std::vector<Piece>& out);

// Block path: classifies 16 bytes per iteration through the class table into
// a reusable buffer, then walks class runs.  Must agree with the scalar path
// byte-for-byte (enforced by differential tests).
void pretokenize_wide(std::string_view text, std::vector<std::uint8_t>& class_buf,
                      std::vector<Piece>& out);

// ---- merge table -----------------------------------------------------------

// One merge rule: (left, right) -> merged, with its rank.  Exactly 16 bytes
// so four rules share a cache line.
struct MergeEntry {
    std::uint32_t left;
    std::uint32_t right;
    std::uint32_t merged;
    std::uint32_t rank;
};
static_assert(sizeof(MergeEntry) == 16, "merge entries must pack four per cache line");

// Open-addressed flat hash over (left, right) pairs.  Buckets hold four
// entries on a 64-byte boundary; probing walks the bucket then continues to
// the next one.  Grows to keep load factor at or below 0.7.
class MergeTable {
  public:
    static constexpr std::uint32_t kEmpty = 0xFFFFFFFFu;

    explicit MergeTable(std::size_t expected = 0);

    void insert(std::uint32_t left, std::uint32_t right, std::uint32_t merged,
                std::uint32_t rank);

    // nullptr when the pair has no merge rule.
    const MergeEntry* find(std::uint32_t left, std::uint32_t right) const;

    std::size_t size() const { return count_; }
    std::size_t bucket_count() const { return buckets_.size(); }
    double load_factor() const {
        return buckets_.empty() ? 0.0
                                : static_cast<double>(count_) /
                                      static_cast<double>(buckets_.size() * kEntriesPerBucket);
    }

  private:
    static constexpr std::size_t kEntriesPerBucket = 4;

    struct alignas(64) Bucket {
        MergeEntry e[kEntriesPerBucket];
    };
    static_assert(sizeof(Bucket) == 64, "bucket must be exactly one cache line");

    static std::uint64_t hash_pair(std::uint32_t left, std::uint32_t right) {
        std::uint64_t key = (static_cast<std::uint64_t>(left) << 32) | right;
        return key * 0x9E3779B97F4A7C15ull;
    }

    void rehash(std::size_t bucket_count);

    std::vector<Bucket> buckets_;
    std::size_t count_ = 0;
};

// ---- symbol nodes ----------------------------------------------------------

// Doubly-linked list node over a flat per-worker array; exactly 16 bytes so
// short words stay within two cache lines.
struct SymbolNode {
    std::uint32_t token = 0;
    std::uint32_t prev = 0;
    std::uint32_t next = 0;
    std::uint32_t length = 0;  // byte length of the token's string
};
static_assert(sizeof(SymbolNode) == 16, "symbol nodes must stay at 16 bytes");

constexpr std::uint32_t kNodeNone = 0xFFFFFFFFu;

// Per-worker scratch for the allocation-free encode path.  Reused across
// calls; all growth happens during warm-up.
struct EncodeScratch {
    std::vector<SymbolNode> nodes;
    std::vector<Piece> pieces;
    std::vector<std::uint8_t> classes;

    void reserve(std::size_t max_text_bytes);
};

// ---- file format helpers ---------------------------------------------------

// Tokens are stored with "\xNN" escapes for bytes outside 0x21..0x7E and for
// the backslash itself, so whitespace never collides with field separators.
std::string escape_token(std::string_view raw);
std::string unescape_token(std::string_view escaped, std::size_t line_no);

// ---- tokenizer -------------------------------------------------------------

// Byte-level BPE: every byte is a base token, merges combine adjacent pairs
// greedily by rank (lowest rank first, leftmost on ties).  Immutable after
// construction; encode/decode are reentrant given per-worker scratch.
class Tokenizer {
  public:
    // Vocab: "token_string<TAB>id" lines.  Merges: "left right" lines in
    // rank order.  All 256 single-byte tokens must be present.
    static Tokenizer load(const std::string& vocab_path, const std::string& merges_path);
    static Tokenizer from_text(std::string_view vocab_text, std::string_view merges_text);

    // 256 byte tokens, no merges.
    static Tokenizer byte_level();

    // Allocation-free after warm-up: appends ids to `out` using only
    // `scratch` storage.
    void encode(std::string_view text, EncodeScratch& scratch,
                std::vector<TokenId>& out) const;
    std::vector<TokenId> encode(std::string_view text) const;

    void decode(std::span<const TokenId> ids, std::string& out) const;
    std::string decode(std::span<const TokenId> ids) const;

    std::uint32_t vocab_size() const { return static_cast<std::uint32_t>(vocab_.size()); }
    bool has_token(TokenId id) const { return id < vocab_.size() && present_[id]; }
    const std::string& token_bytes(TokenId id) const;
    std::size_t merge_count() const { return merges_.size(); }
    const MergeTable& merge_table() const { return merges_; }

    void set_wide_pretokenize(bool on) { use_wide_ = on; }
    bool wide_pretokenize() const { return use_wide_; }

  private:
    Tokenizer() = default;

    void encode_piece(std::string_view piece, EncodeScratch& scratch,
                      std::vector<TokenId>& out) const;

    std::vector<std::string> vocab_;  // id -> bytes
    std::vector<std::uint8_t> present_;
    std::array<TokenId, 256> byte_token_{};
    MergeTable merges_{0};
    bool use_wide_ = true;
};

}  // namespace devserve
