#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "invx/error.hpp"
#include "invx/ingest.hpp"
#include "invx/layout.hpp"
#include "support.hpp"

namespace invx {
namespace {

constexpr int kDpi = 300;

struct Page {
  SyntheticInvoice inv;
  std::vector<Token> tokens;
};

Page page(int index) {
  Page p{make_synthetic_invoice(7, index), {}};
  p.tokens = truth_tokens(p.inv.runs, kDpi);
  sort_reading_order(p.tokens);
  return p;
}

Token tok(int id, std::string text, double x0, double y0, double x1, double y1) {
  return Token{id, std::move(text), BBox{x0, y0, x1, y1}, 0, 1.0, "embedded"};
}

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

// Lines from generator geometry: same printed row, split where words are
// more than two line heights apart.
std::size_t oracle_line_count(const std::vector<Token>& tokens) {
  std::map<double, std::vector<BBox>> rows;
  for (const auto& t : tokens) rows[t.bbox.y0].push_back(t.bbox);
  std::size_t n = 0;
  for (auto& [y, boxes] : rows) {
    std::sort(boxes.begin(), boxes.end(), [](const BBox& a, const BBox& b) { return a.x0 < b.x0; });
    ++n;
    for (std::size_t i = 1; i < boxes.size(); ++i)
      if (boxes[i].x0 - boxes[i - 1].x1 > 2.0 * boxes[i].height()) ++n;
  }
  return n;
}

TEST(Lines, Examples) {
  std::vector<Token> same{tok(0, "a", 0, 0, 10, 10), tok(1, "b", 12, 2, 20, 12)};
  auto l = cluster_lines(same);
  ASSERT_EQ(l.size(), 1u);
  EXPECT_EQ(l[0].token_ids, (std::vector<int>{0, 1}));
  std::vector<Token> apart{tok(0, "a", 0, 0, 10, 10), tok(1, "b", 0, 10, 10, 20)};
  EXPECT_EQ(cluster_lines(apart).size(), 2u);
}

TEST(Lines, MatchGeneratorRows) {
  for (int i = 0; i < 9; ++i) {
    auto p = page(i);
    EXPECT_EQ(cluster_lines(p.tokens).size(), oracle_line_count(p.tokens)) << p.inv.id;
  }
}

TEST(Blocks, Examples) {
  std::vector<Token> paras{tok(0, "one", 0, 0, 30, 10), tok(1, "two", 0, 12, 30, 22), tok(2, "three", 0, 62, 40, 72)};
  auto blocks = cluster_blocks(cluster_lines(paras));
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].token_ids, (std::vector<int>{0, 1}));
  std::vector<Token> single{tok(0, "alone", 0, 0, 50, 10), tok(1, "here", 55, 0, 90, 10)};
  EXPECT_EQ(cluster_blocks(cluster_lines(single)).size(), 1u);
}

TEST(Blocks, AddressStanzaIsOneBlock) {
  for (int i = 0; i < 9; ++i) {
    auto p = page(i);
    auto blocks = cluster_blocks(cluster_lines(p.tokens));
    std::map<int, int> block_of;
    for (const auto& b : blocks)
      for (int id : b.token_ids) block_of[id] = b.id;
    // Tokens come from runs in order, so run r owns a contiguous id range.
    auto raw = truth_tokens(p.inv.runs, kDpi);
    std::vector<int> run_of_raw;
    for (std::size_t r = 0; r < p.inv.runs.size(); ++r) {
      std::istringstream words(p.inv.runs[r].text);
      std::string w;
      while (words >> w) run_of_raw.push_back(static_cast<int>(r));
    }
    ASSERT_EQ(run_of_raw.size(), raw.size());
    std::map<std::pair<double, double>, int> sorted_id;
    for (const auto& t : p.tokens) sorted_id[{t.bbox.x0, t.bbox.y0}] = t.id;
    for (const auto& truth_block : p.inv.blocks) {
      const auto& first = p.inv.runs[truth_block.front()].text;
      if (first.find("To:") == std::string::npos) continue;
      std::set<int> seen;
      for (std::size_t k = 0; k < raw.size(); ++k)
        if (std::count(truth_block.begin(), truth_block.end(), run_of_raw[k]))
          seen.insert(block_of.at(sorted_id.at({raw[k].bbox.x0, raw[k].bbox.y0})));
      EXPECT_EQ(seen.size(), 1u) << p.inv.id << " " << first;
    }
  }
}

TEST(LayoutProperty, EveryTokenInExactlyOneLineAndBlock) {
  for (int i = 0; i < 12; ++i) {
    auto p = page(i);
    auto lines = cluster_lines(p.tokens);
    auto blocks = cluster_blocks(lines);
    std::multiset<int> in_lines, in_blocks;
    for (const auto& l : lines) in_lines.insert(l.token_ids.begin(), l.token_ids.end());
    for (const auto& b : blocks) {
      in_blocks.insert(b.token_ids.begin(), b.token_ids.end());
      BBox tight = p.tokens[static_cast<std::size_t>(b.token_ids.front())].bbox;
      for (int id : b.token_ids) tight = tight.united(p.tokens[static_cast<std::size_t>(id)].bbox);
      EXPECT_EQ(b.bbox, tight);
    }
    std::multiset<int> all;
    for (const auto& t : p.tokens) all.insert(t.id);
    EXPECT_EQ(in_lines, all);
    EXPECT_EQ(in_blocks, all);
  }
}

TEST(Regions, Bands) {
  std::vector<Token> t{tok(0, "Header", 10, 100, 100, 130), tok(1, "Body", 10, 1500, 100, 1530),
                       tok(2, "Footer", 10, 3130, 100, 3160)};
  auto blocks = cluster_blocks(cluster_lines(t));
  classify_regions(blocks, 3300, {});
  ASSERT_EQ(blocks.size(), 3u);
  EXPECT_EQ(blocks[0].region, Region::header);
  EXPECT_EQ(blocks[1].region, Region::body);
  EXPECT_EQ(blocks[2].region, Region::footer);
}

TEST(Tables, LineItemGrid) {
  for (int i = 0; i < 9; ++i) {
    auto p = page(i);
    auto tables = detect_tables(p.tokens);
    if (p.inv.line_items.size() + 1 < 3) {
      EXPECT_TRUE(tables.empty()) << p.inv.id;
      continue;
    }
    ASSERT_EQ(tables.size(), 1u) << p.inv.id;
    EXPECT_EQ(tables[0].rows.size(), p.inv.line_items.size() + 1) << p.inv.id;
    EXPECT_EQ(tables[0].columns.size(), 4u) << p.inv.id;
    auto blocks = cluster_blocks(cluster_lines(p.tokens));
    classify_regions(blocks, 11.0 * kDpi, tables);
    EXPECT_TRUE(std::any_of(blocks.begin(), blocks.end(), [](const Block& b) { return b.region == Region::table; }));
  }
}

TEST(Tables, BelowMinimums) {
  std::vector<Token> prose;
  for (int r = 0; r < 5; ++r)
    for (int w = 0; w < 6; ++w)
      prose.push_back(tok(r * 6 + w, "word", w * 60 + (r % 2) * 17, r * 20, w * 60 + 45 + (r % 2) * 17, r * 20 + 16));
  EXPECT_TRUE(detect_tables(prose).empty());
  std::vector<Token> grid;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c)
      grid.push_back(tok(r * 4 + c, c ? "12.50" : "Widget", c * 200, r * 20, c * 200 + 100, r * 20 + 16));
  EXPECT_TRUE(detect_tables(grid).empty());
}

TEST(TableProperty, CellsReproduceTableTokens) {
  for (int i = 0; i < 12; ++i) {
    auto p = page(i);
    for (const auto& table : detect_tables(p.tokens)) {
      std::vector<int> from_cells;
      for (std::size_t r = 0; r < table.cells.size(); ++r)
        for (std::size_t c = 0; c < table.cells[r].size(); ++c)
          for (int id : table.cells[r][c]) {
            const auto& b = p.tokens[static_cast<std::size_t>(id)].bbox;
            EXPECT_GT(overlap(b.y0, b.y1, table.rows[r].y0, table.rows[r].y1), 0);
            EXPECT_GE(b.x0, table.columns[c].first);
            EXPECT_LE(b.x1, table.columns[c].second);
            from_cells.push_back(id);
          }
      std::vector<int> inside;
      for (const auto& t : p.tokens)
        if (t.bbox.x0 >= table.bbox.x0 && t.bbox.x1 <= table.bbox.x1 && t.bbox.y0 >= table.bbox.y0 &&
            t.bbox.y1 <= table.bbox.y1)
          inside.push_back(t.id);
      EXPECT_EQ(from_cells, inside) << p.inv.id;
      for (std::size_t r = 1; r < table.rows.size(); ++r) EXPECT_LT(table.rows[r - 1].y0, table.rows[r].y0);
      for (std::size_t c = 1; c < table.columns.size(); ++c)
        EXPECT_LT(table.columns[c - 1].first, table.columns[c].first);
    }
  }
}

std::vector<Edge> oracle_edges(const std::vector<Block>& blocks) {
  std::vector<Edge> out;
  for (const auto& a : blocks) {
    std::optional<Edge> right, below;
    for (const auto& b : blocks) {
      if (a.id == b.id) continue;
      double vo = overlap(a.bbox.y0, a.bbox.y1, b.bbox.y0, b.bbox.y1) /
                  std::min(a.bbox.height(), b.bbox.height());
      double ho = overlap(a.bbox.x0, a.bbox.x1, b.bbox.x0, b.bbox.x1) / std::min(a.bbox.width(), b.bbox.width());
      if (b.bbox.x0 >= a.bbox.x1 && vo >= 0.5) {
        double gap = b.bbox.x0 - a.bbox.x1;
        if (!right || gap < right->gap_px) right = Edge{a.id, b.id, Relation::right_of, gap};
      }
      if (b.bbox.y0 >= a.bbox.y1 && ho >= 0.3) {
        double gap = b.bbox.y0 - a.bbox.y1;
        if (!below || gap < below->gap_px) below = Edge{a.id, b.id, Relation::below, gap};
      }
    }
    for (auto& e : {right, below})
      if (e) {
        out.push_back(*e);
        out.push_back({e->dst, e->src, e->relation == Relation::right_of ? Relation::left_of : Relation::above, e->gap_px});
      }
  }
  return out;
}

auto edge_key(const Edge& e) { return std::tuple(e.src, e.dst, static_cast<int>(e.relation), e.gap_px); }

TEST(Graph, Examples) {
  std::vector<Token> side{tok(0, "Date:", 0, 0, 50, 10), tok(1, "2024-03-04", 200, 0, 300, 10)};
  auto blocks = cluster_blocks(cluster_lines(side));
  ASSERT_EQ(blocks.size(), 2u);
  auto g = build_graph(blocks);
  auto r = g.neighbor(blocks[0].id, Relation::right_of);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->dst, blocks[1].id);
  EXPECT_EQ(r->gap_px, 150);
  EXPECT_TRUE(g.neighbor(blocks[1].id, Relation::left_of));
  std::vector<Token> one{tok(0, "alone", 0, 0, 50, 10)};
  EXPECT_TRUE(build_graph(cluster_blocks(cluster_lines(one))).edges.empty());
}

TEST(GraphProperty, EqualsBruteForceAndIsSymmetric) {
  for (int i = 0; i < 12; ++i) {
    auto p = page(i);
    auto blocks = cluster_blocks(cluster_lines(p.tokens));
    auto g = build_graph(blocks);
    std::multiset<std::tuple<int, int, int, double>> got, want;
    for (const auto& e : g.edges) got.insert(edge_key(e));
    for (const auto& e : oracle_edges(blocks)) want.insert(edge_key(e));
    EXPECT_EQ(got, want) << p.inv.id;
    for (const auto& e : g.edges) {
      EXPECT_GE(e.gap_px, 0);
      Relation inv = e.relation == Relation::right_of ? Relation::left_of
                     : e.relation == Relation::left_of ? Relation::right_of
                     : e.relation == Relation::below   ? Relation::above
                                                       : Relation::below;
      EXPECT_TRUE(std::count(g.edges.begin(), g.edges.end(), Edge{e.dst, e.src, inv, e.gap_px}));
    }
  }
}

TEST(Lexicon, Matching) {
  auto lex = Lexicon::builtin();
  EXPECT_GE(lex.size(), 40u);
  auto m = lex.match_prefix("Invoice Date: 2024-03-04");
  ASSERT_TRUE(m);
  EXPECT_EQ(m->field, CanonicalField::invoice_date);
  EXPECT_EQ(lex.match_prefix("TOTAL DUE")->field, CanonicalField::total_amount);
  EXPECT_EQ(lex.match_prefix("invoice #")->field, CanonicalField::invoice_number);
  EXPECT_FALSE(lex.match_prefix("Taxonomy"));
  EXPECT_EQ(normalize_label("  Invoice   No.: "), "invoice no");
}

TEST(Lexicon, FromFile) {
  test::TempDir dir;
  write_file_atomic(dir / "lex.tsv", "# extra\nref no\tinvoice_number\nconsignee\tshipping_address\n");
  auto lex = Lexicon::builtin();
  lex.load_file(dir / "lex.tsv");
  EXPECT_EQ(lex.match_prefix("Ref No: 9")->field, CanonicalField::invoice_number);
  EXPECT_EQ(Lexicon::from_file(dir / "lex.tsv").size(), 2u);
  write_file_atomic(dir / "bad.tsv", "phrase\tnot_a_field\n");
  EXPECT_THROW(Lexicon::from_file(dir / "bad.tsv"), Error);
}

std::map<CanonicalField, std::string> link_map(const std::vector<Token>& tokens) {
  auto pl = analyze_page(tokens, 11.0 * kDpi, Lexicon::builtin());
  std::map<CanonicalField, std::string> out;
  for (const auto& l : pl.links) out[l.field] = l.value;
  return out;
}

TEST(Links, Examples) {
  auto right = link_map({tok(0, "Invoice", 0, 0, 70, 10), tok(1, "Date:", 75, 0, 120, 10),
                         tok(2, "2024-03-04", 400, 0, 500, 10)});
  EXPECT_EQ(right[CanonicalField::invoice_date], "2024-03-04");
  auto colon = link_map({tok(0, "Due", 0, 0, 30, 10), tok(1, "Date:", 35, 0, 80, 10), tok(2, "2024-04-03", 85, 0, 185, 10)});
  EXPECT_EQ(colon[CanonicalField::due_date], "2024-04-03");
}

TEST(Links, DatesDoNotCrossCapture) {
  for (int i = 0; i < 12; ++i) {
    auto p = page(i);
    auto links = link_map(p.tokens);
    EXPECT_EQ(links[CanonicalField::invoice_date], p.inv.printed[CanonicalField::invoice_date]) << p.inv.id;
    EXPECT_EQ(links[CanonicalField::due_date], p.inv.printed[CanonicalField::due_date]) << p.inv.id;
    EXPECT_NE(links[CanonicalField::invoice_date], links[CanonicalField::due_date]);
  }
}

}  // namespace
}  // namespace invx
