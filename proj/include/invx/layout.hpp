#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invx/model.hpp"

namespace invx {

/// Clustering constants; defaults are the documented values.
struct LayoutParams {
  double line_overlap = 0.5;        // vertical overlap / shorter height
  double line_split_gap = 2.0;      // horizontal gap (x line height) that splits a line
  double block_gap = 1.5;           // vertical gap (x median line height) inside a block
  double block_span_overlap = 0.2;  // horizontal span overlap / shorter span
  double header_band = 0.20;
  double footer_band = 0.10;
  int table_min_rows = 3;
  int table_min_cols = 3;
  int table_min_numeric_cols = 2;
  double table_align = 0.5;         // x median char width
  double graph_row_overlap = 0.5;
  double graph_col_overlap = 0.3;
};

struct Line {
  std::vector<int> token_ids;  // left to right
  BBox bbox;
  std::string text;
};

enum class Region { header, footer, body, table };
enum class BlockRole { label, value, mixed, unknown };
std::string_view to_string(Region r) noexcept;
std::string_view to_string(BlockRole r) noexcept;

struct Block {
  int id = 0;
  std::vector<int> token_ids;  // reading order
  std::vector<Line> lines;
  BBox bbox;
  Region region = Region::body;
  BlockRole role = BlockRole::unknown;

  std::string text() const;
};

enum class Relation { right_of, below, left_of, above };
std::string_view to_string(Relation r) noexcept;

struct Edge {
  int src = 0;
  int dst = 0;
  Relation relation = Relation::right_of;
  double gap_px = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct LayoutGraph {
  std::vector<int> nodes;
  std::vector<Edge> edges;

  std::optional<Edge> neighbor(int block, Relation r) const;
};

struct TableRegion {
  BBox bbox;
  std::vector<BBox> rows;                           // sorted by y
  std::vector<std::pair<double, double>> columns;   // x-spans sorted by x
  std::vector<std::vector<std::vector<int>>> cells; // [row][col] -> token ids
};

/// Tokens of one page grouped into lines: shared line iff vertical overlap is
/// at least half the shorter height, split where the horizontal gap exceeds
/// `line_split_gap` line heights. Lines sorted by y, tokens by x0.
std::vector<Line> cluster_lines(std::span<const Token> tokens, const LayoutParams& p = {});

/// Merges consecutive lines into blocks (gap < 1.5 x median line height and
/// span overlap >= 20%). Every line lands in exactly one block.
std::vector<Block> cluster_blocks(const std::vector<Line>& lines, const LayoutParams& p = {});

/// Row/column grids of aligned numeric-bearing lines.
std::vector<TableRegion> detect_tables(std::span<const Token> tokens, const LayoutParams& p = {});

/// Header/footer bands by block center, tables override, body otherwise.
void classify_regions(std::vector<Block>& blocks, double page_height, const std::vector<TableRegion>& tables,
                      const LayoutParams& p = {});

/// Nearest right/below neighbors plus their inverse edges.
LayoutGraph build_graph(const std::vector<Block>& blocks, const LayoutParams& p = {});

/// Label phrase -> canonical field; matching is case- and punctuation-
/// insensitive and the longest phrase wins.
class Lexicon {
 public:
  static Lexicon builtin();
  /// "phrase<TAB>field" per line; '#' starts a comment.
  static Lexicon from_file(const std::filesystem::path& path);
  /// Adds the file's phrases to this lexicon.
  void load_file(const std::filesystem::path& path);
  void add(std::string_view phrase, CanonicalField field);

  struct Match {
    CanonicalField field;
    std::size_t consumed = 0;  // bytes of the original text covered by the label
  };
  /// Longest phrase matching a prefix of `text` at a word boundary.
  std::optional<Match> match_prefix(std::string_view text) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, CanonicalField>> entries_;  // normalized phrases
};

/// Lower-case, punctuation other than '#' and '%' dropped, whitespace collapsed.
std::string normalize_label(std::string_view text);

struct LabelLink {
  CanonicalField field;
  std::string value;
  int label_block = 0;
  int value_block = 0;
  double distance = 0;
  std::vector<int> token_ids;
  int page = 0;
};

/// Assigns label roles and links labels to values: "Label: value" inside a
/// line first, then the overlapping line of the right neighbor, then the rest
/// of a stanza block, then the below neighbor. At most one link per field
/// per page, nearest wins.
std::vector<LabelLink> link_label_value(const LayoutGraph& graph, std::vector<Block>& blocks,
                                        std::span<const Token> tokens, const Lexicon& lexicon);

/// All layout stages for one page.
struct PageLayout {
  std::vector<Line> lines;
  std::vector<Block> blocks;
  std::vector<TableRegion> tables;
  LayoutGraph graph;
  std::vector<LabelLink> links;
};

PageLayout analyze_page(std::span<const Token> tokens, double page_height, const Lexicon& lexicon,
                        const LayoutParams& p = {});

}  // namespace invx
