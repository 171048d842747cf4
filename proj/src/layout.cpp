#include "invx/layout.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "invx/error.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double overlap_1d(double a0, double a1, double b0, double b1) { return std::min(a1, b1) - std::max(a0, b0); }

double vertical_overlap_ratio(const BBox& a, const BBox& b) {
  double shorter = std::min(a.height(), b.height());
  if (shorter <= 0) return 0.0;
  return overlap_1d(a.y0, a.y1, b.y0, b.y1) / shorter;
}

double horizontal_overlap_ratio(const BBox& a, const BBox& b) {
  double shorter = std::min(a.width(), b.width());
  if (shorter <= 0) return 0.0;
  return overlap_1d(a.x0, a.x1, b.x0, b.x1) / shorter;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Rows of tokens (indices into `tokens`) sharing a y-band, each sorted by x0;
// rows sorted by center y.
std::vector<std::vector<std::size_t>> y_bands(std::span<const Token> tokens, double min_overlap) {
  std::vector<std::size_t> order(tokens.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return tokens[a].bbox.y0 < tokens[b].bbox.y0; });
  UnionFind uf(tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const BBox& a = tokens[order[i]].bbox;
    for (std::size_t j = i + 1; j < order.size() && tokens[order[j]].bbox.y0 < a.y1; ++j) {
      if (vertical_overlap_ratio(a, tokens[order[j]].bbox) >= min_overlap)
        uf.unite(static_cast<int>(order[i]), static_cast<int>(order[j]));
    }
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < tokens.size(); ++i) groups[uf.find(static_cast<int>(i))].push_back(i);
  std::vector<std::vector<std::size_t>> rows;
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return tokens[a].bbox.x0 < tokens[b].bbox.x0;
    });
    rows.push_back(std::move(members));
  }
  auto row_cy = [&](const std::vector<std::size_t>& r) {
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (auto i : r) {
      lo = std::min(lo, tokens[i].bbox.y0);
      hi = std::max(hi, tokens[i].bbox.y1);
    }
    return (lo + hi) / 2;
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    double ca = row_cy(a), cb = row_cy(b);
    if (ca != cb) return ca < cb;
    return tokens[a.front()].bbox.x0 < tokens[b.front()].bbox.x0;
  });
  return rows;
}

// Splits one sorted row into segments at wide horizontal gaps.
std::vector<std::vector<std::size_t>> split_row(std::span<const Token> tokens, const std::vector<std::size_t>& row,
                                                double gap_factor) {
  double h = 0;
  for (auto i : row) h = std::max(h, tokens[i].bbox.height());
  std::vector<std::vector<std::size_t>> segs;
  for (auto i : row) {
    if (segs.empty() || tokens[i].bbox.x0 - tokens[segs.back().back()].bbox.x1 > gap_factor * h) {
      segs.push_back({i});
    } else {
      segs.back().push_back(i);
    }
  }
  return segs;
}

bool is_address_field(CanonicalField f) {
  return f == CanonicalField::vendor_address || f == CanonicalField::billing_address ||
         f == CanonicalField::shipping_address;
}

bool is_numeric_text(std::string_view s) {
  int digits = 0, alnum = 0;
  for (unsigned char c : s) {
    if (std::isdigit(c)) ++digits;
    if (std::isalnum(c)) ++alnum;
  }
  return alnum > 0 && digits * 2 >= alnum;
}

}  // namespace

std::string_view to_string(Region r) noexcept {
  switch (r) {
    case Region::header: return "header";
    case Region::footer: return "footer";
    case Region::body: return "body";
    case Region::table: return "table";
  }
  return "body";
}

std::string_view to_string(BlockRole r) noexcept {
  switch (r) {
    case BlockRole::label: return "label";
    case BlockRole::value: return "value";
    case BlockRole::mixed: return "mixed";
    case BlockRole::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Relation r) noexcept {
  switch (r) {
    case Relation::right_of: return "right_of";
    case Relation::below: return "below";
    case Relation::left_of: return "left_of";
    case Relation::above: return "above";
  }
  return "right_of";
}

std::string Block::text() const {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i].text;
  }
  return out;
}

std::optional<Edge> LayoutGraph::neighbor(int block, Relation r) const {
  for (const auto& e : edges)
    if (e.src == block && e.relation == r) return e;
  return std::nullopt;
}

std::vector<Line> cluster_lines(std::span<const Token> tokens, const LayoutParams& p) {
  std::vector<Line> lines;
  for (const auto& row : y_bands(tokens, p.line_overlap)) {
    for (const auto& seg : split_row(tokens, row, p.line_split_gap)) {
      Line line;
      line.bbox = tokens[seg.front()].bbox;
      for (auto i : seg) {
        line.token_ids.push_back(tokens[i].id);
        line.bbox = line.bbox.united(tokens[i].bbox);
        if (!line.text.empty()) line.text += ' ';
        line.text += tokens[i].text;
      }
      lines.push_back(std::move(line));
    }
  }
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (vertical_overlap_ratio(a.bbox, b.bbox) >= 0.5) return a.bbox.x0 < b.bbox.x0;
    return a.bbox.cy() < b.bbox.cy();
  });
  return lines;
}

std::vector<Block> cluster_blocks(const std::vector<Line>& lines, const LayoutParams& p) {
  std::vector<double> heights;
  for (const auto& l : lines) heights.push_back(l.bbox.height());
  double med = median(heights);
  std::vector<Block> blocks;
  for (const auto& line : lines) {
    int best = -1;
    double best_gap = std::numeric_limits<double>::max();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const Line& last = blocks[b].lines.back();
      if (line.bbox.cy() <= last.bbox.y1) continue;  // not below the block
      double gap = line.bbox.y0 - last.bbox.y1;
      if (gap >= p.block_gap * med) continue;
      if (horizontal_overlap_ratio(line.bbox, blocks[b].bbox) < p.block_span_overlap) continue;
      if (gap < best_gap) {
        best_gap = gap;
        best = static_cast<int>(b);
      }
    }
    if (best < 0) {
      Block blk;
      blk.id = static_cast<int>(blocks.size());
      blk.bbox = line.bbox;
      blocks.push_back(std::move(blk));
      best = static_cast<int>(blocks.size()) - 1;
    }
    Block& blk = blocks[best];
    blk.lines.push_back(line);
    blk.bbox = blk.bbox.united(line.bbox);
    blk.token_ids.insert(blk.token_ids.end(), line.token_ids.begin(), line.token_ids.end());
  }
  return blocks;
}

std::vector<TableRegion> detect_tables(std::span<const Token> tokens, const LayoutParams& p) {
  std::vector<TableRegion> tables;
  if (tokens.empty()) return tables;
  std::vector<double> char_w, row_h;
  for (const auto& t : tokens)
    if (!t.text.empty()) char_w.push_back(t.bbox.width() / static_cast<double>(t.text.size()));
  double align_tol = p.table_align * median(char_w);

  auto rows = y_bands(tokens, p.line_overlap);
  std::vector<std::vector<std::vector<std::size_t>>> segs;
  std::vector<BBox> row_box;
  for (const auto& r : rows) {
    segs.push_back(split_row(tokens, r, p.line_split_gap));
    BBox b = tokens[r.front()].bbox;
    for (auto i : r) b = b.united(tokens[i].bbox);
    row_box.push_back(b);
    row_h.push_back(b.height());
  }
  double med_h = median(row_h);

  struct Columns {
    std::vector<std::pair<double, double>> spans;
  };
  auto columns_of = [&](std::size_t from, std::size_t to) {
    std::vector<std::pair<double, double>> iv;
    for (std::size_t r = from; r <= to; ++r)
      for (const auto& s : segs[r]) {
        double x0 = tokens[s.front()].bbox.x0, x1 = x0;
        for (auto i : s) x1 = std::max(x1, tokens[i].bbox.x1);
        iv.emplace_back(x0, x1);
      }
    std::sort(iv.begin(), iv.end());
    Columns c;
    for (const auto& [a, b] : iv) {
      if (!c.spans.empty() && a - c.spans.back().second < align_tol)
        c.spans.back().second = std::max(c.spans.back().second, b);
      else
        c.spans.emplace_back(a, b);
    }
    return c;
  };
  auto col_index = [](const Columns& c, double cx) {
    for (std::size_t k = 0; k < c.spans.size(); ++k)
      if (cx >= c.spans[k].first && cx <= c.spans[k].second) return static_cast<int>(k);
    return -1;
  };
  auto run_ok = [&](std::size_t from, std::size_t to, Columns& out) {
    Columns c = columns_of(from, to);
    if (static_cast<int>(c.spans.size()) < p.table_min_cols) return false;
    for (std::size_t r = from; r <= to; ++r) {
      std::vector<bool> used(c.spans.size(), false);
      for (const auto& s : segs[r]) {
        double x0 = tokens[s.front()].bbox.x0, x1 = tokens[s.back()].bbox.x1;
        int k = col_index(c, (x0 + x1) / 2);
        if (k < 0 || used[k]) return false;  // two segments in one column
        used[k] = true;
      }
      if (std::count(used.begin(), used.end(), true) < p.table_min_cols) return false;
      if (r > from && row_box[r].y0 - row_box[r - 1].y1 > 2.0 * med_h) return false;
    }
    out = c;
    return true;
  };

  std::size_t i = 0;
  while (i < rows.size()) {
    Columns cols;
    if (static_cast<int>(segs[i].size()) < p.table_min_cols || !run_ok(i, i, cols)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < rows.size()) {
      Columns next;
      if (!run_ok(i, j + 1, next)) break;
      cols = next;
      ++j;
    }
    if (static_cast<int>(j - i + 1) >= p.table_min_rows) {
      // A header label set flush-left over a right-aligned numeric column
      // opens a span of its own; fold it into the neighbor it heads.
      auto header_only = [&](std::size_t k) {
        for (std::size_t r = i + 1; r <= j; ++r)
          for (const auto& s : segs[r])
            if (col_index(cols, (tokens[s.front()].bbox.x0 + tokens[s.back()].bbox.x1) / 2) == static_cast<int>(k))
              return false;
        return true;
      };
      for (std::size_t k = 0; k < cols.spans.size() && cols.spans.size() > 1;) {
        if (!header_only(k)) {
          ++k;
          continue;
        }
        double left = k > 0 ? cols.spans[k].first - cols.spans[k - 1].second : 1e300;
        double right = k + 1 < cols.spans.size() ? cols.spans[k + 1].first - cols.spans[k].second : 1e300;
        std::size_t into = right <= left ? k + 1 : k - 1;
        if (!header_only(into)) {
          cols.spans[into].first = std::min(cols.spans[into].first, cols.spans[k].first);
          cols.spans[into].second = std::max(cols.spans[into].second, cols.spans[k].second);
          cols.spans.erase(cols.spans.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
          ++k;
        }
      }
      TableRegion t;
      t.columns = cols.spans;
      t.cells.assign(j - i + 1, std::vector<std::vector<int>>(cols.spans.size()));
      std::vector<int> numeric(cols.spans.size(), 0), nonempty(cols.spans.size(), 0);
      for (std::size_t r = i; r <= j; ++r) {
        t.rows.push_back(row_box[r]);
        t.bbox = r == i ? row_box[r] : t.bbox.united(row_box[r]);
        for (const auto& s : segs[r]) {
          double x0 = tokens[s.front()].bbox.x0, x1 = tokens[s.back()].bbox.x1;
          int k = col_index(cols, (x0 + x1) / 2);
          std::string text;
          for (auto idx : s) {
            t.cells[r - i][k].push_back(tokens[idx].id);
            text += tokens[idx].text;
          }
          ++nonempty[k];
          if (is_numeric_text(text)) ++numeric[k];
        }
      }
      int numeric_cols = 0;
      for (std::size_t k = 0; k < cols.spans.size(); ++k)
        if (nonempty[k] > 0 && numeric[k] * 2 > nonempty[k]) ++numeric_cols;
      if (numeric_cols >= p.table_min_numeric_cols) {
        tables.push_back(std::move(t));
        i = j + 1;
        continue;
      }
    }
    ++i;
  }
  return tables;
}

void classify_regions(std::vector<Block>& blocks, double page_height, const std::vector<TableRegion>& tables,
                      const LayoutParams& p) {
  for (auto& b : blocks) {
    double cy = b.bbox.cy();
    bool in_table = std::any_of(tables.begin(), tables.end(), [&](const TableRegion& t) {
      return b.bbox.cx() >= t.bbox.x0 && b.bbox.cx() <= t.bbox.x1 && cy >= t.bbox.y0 && cy <= t.bbox.y1;
    });
    if (in_table)
      b.region = Region::table;
    else if (cy < p.header_band * page_height)
      b.region = Region::header;
    else if (cy > (1.0 - p.footer_band) * page_height)
      b.region = Region::footer;
    else
      b.region = Region::body;
  }
}

LayoutGraph build_graph(const std::vector<Block>& blocks, const LayoutParams& p) {
  LayoutGraph g;
  for (const auto& b : blocks) g.nodes.push_back(b.id);
  std::vector<Edge> forward;
  for (const auto& a : blocks) {
    const Block* right = nullptr;
    const Block* below = nullptr;
    double right_gap = 0, below_gap = 0;
    for (const auto& b : blocks) {
      if (b.id == a.id) continue;
      if (b.bbox.x0 >= a.bbox.x1 && vertical_overlap_ratio(a.bbox, b.bbox) >= p.graph_row_overlap) {
        double gap = b.bbox.x0 - a.bbox.x1;
        if (!right || gap < right_gap || (gap == right_gap && b.id < right->id)) {
          right = &b;
          right_gap = gap;
        }
      }
      if (b.bbox.y0 >= a.bbox.y1 && horizontal_overlap_ratio(a.bbox, b.bbox) >= p.graph_col_overlap) {
        double gap = b.bbox.y0 - a.bbox.y1;
        if (!below || gap < below_gap || (gap == below_gap && b.id < below->id)) {
          below = &b;
          below_gap = gap;
        }
      }
    }
    if (right) forward.push_back({a.id, right->id, Relation::right_of, right_gap});
    if (below) forward.push_back({a.id, below->id, Relation::below, below_gap});
  }
  for (const auto& e : forward) {
    g.edges.push_back(e);
    g.edges.push_back({e.dst, e.src, e.relation == Relation::right_of ? Relation::left_of : Relation::above, e.gap_px});
  }
  return g;
}

std::string normalize_label(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '#' || c == '%') {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      space = true;
    }
  }
  return out;
}

Lexicon Lexicon::builtin() {
  using F = CanonicalField;
  Lexicon lx;
  const std::pair<const char*, F> entries[] = {
      {"invoice no", F::invoice_number},      {"invoice number", F::invoice_number},
      {"invoice #", F::invoice_number},       {"invoice num", F::invoice_number},
      {"inv no", F::invoice_number},          {"inv #", F::invoice_number},
      {"bill no", F::invoice_number},         {"invoice id", F::invoice_number},
      {"invoice date", F::invoice_date},      {"date of issue", F::invoice_date},
      {"issue date", F::invoice_date},        {"date issued", F::invoice_date},
      {"date", F::invoice_date},              {"due date", F::due_date},
      {"payment due", F::due_date},           {"due by", F::due_date},
      {"pay by", F::due_date},                {"vendor", F::vendor_name},
      {"supplier", F::vendor_name},           {"seller", F::vendor_name},
      {"sold by", F::vendor_name},            {"from", F::vendor_name},
      {"vendor address", F::vendor_address},  {"remit to", F::vendor_address},
      {"bill to", F::billing_address},        {"billed to", F::billing_address},
      {"invoice to", F::billing_address},     {"billing address", F::billing_address},
      {"ship to", F::shipping_address},       {"shipped to", F::shipping_address},
      {"deliver to", F::shipping_address},    {"shipping address", F::shipping_address},
      {"currency", F::currency},              {"subtotal", F::subtotal},
      {"sub total", F::subtotal},             {"net amount", F::subtotal},
      {"tax", F::tax_amount},                 {"vat", F::tax_amount},
      {"gst", F::tax_amount},                 {"sales tax", F::tax_amount},
      {"tax amount", F::tax_amount},          {"tax rate", F::tax_rate},
      {"vat rate", F::tax_rate},              {"gst rate", F::tax_rate},
      {"discount", F::discount_amount},       {"less discount", F::discount_amount},
      {"total", F::total_amount},             {"total due", F::total_amount},
      {"amount due", F::total_amount},        {"grand total", F::total_amount},
      {"balance due", F::total_amount},       {"total amount", F::total_amount},
      {"invoice total", F::total_amount},     {"weight", F::weight_kg},
      {"net weight", F::weight_kg},           {"gross weight", F::weight_kg},
      {"total weight", F::weight_kg},
  };
  for (const auto& [phrase, field] : entries) lx.add(phrase, field);
  return lx;
}

Lexicon Lexicon::from_file(const std::filesystem::path& path) {
  Lexicon lx;
  lx.load_file(path);
  return lx;
}

void Lexicon::load_file(const std::filesystem::path& path) {
  std::string content = read_text_file(path);
  int lineno = 0;
  for (const auto& raw : split(content, '\n')) {
    ++lineno;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": expected phrase<TAB>field");
    auto field = field_from_name(trim(line.substr(tab + 1)));
    if (!field)
      throw Error(ErrorCode::UnknownField, path.string() + ":" + std::to_string(lineno) + ": " + line.substr(tab + 1));
    add(line.substr(0, tab), *field);
  }
}

void Lexicon::add(std::string_view phrase, CanonicalField field) {
  std::string norm = normalize_label(phrase);
  if (norm.empty()) return;
  for (auto& e : entries_)
    if (e.first == norm) {
      e.second = field;
      return;
    }
  entries_.emplace_back(std::move(norm), field);
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
}

std::optional<Lexicon::Match> Lexicon::match_prefix(std::string_view text) const {
  // Normalize while remembering how many source bytes each output char covers.
  std::string norm;
  std::vector<std::size_t> src_end;  // source offset just past each normalized char
  bool space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c) || c == '#' || c == '%') {
      if (space && !norm.empty()) {
        norm.push_back(' ');
        src_end.push_back(i);
      }
      space = false;
      norm.push_back(static_cast<char>(std::tolower(c)));
      src_end.push_back(i + 1);
    } else {
      space = true;
    }
  }
  for (const auto& [phrase, field] : entries_) {
    if (norm.compare(0, phrase.size(), phrase) != 0) continue;
    if (norm.size() > phrase.size() && norm[phrase.size()] != ' ') continue;
    std::size_t consumed = src_end[phrase.size() - 1];
    // Swallow a parenthetical ("Tax (10%)") and the separator punctuation
    // that ends a label ("Total:", "No.").
    std::size_t k = consumed;
    while (k < text.size() && text[k] == ' ') ++k;
    if (k < text.size() && text[k] == '(') {
      auto close = text.find(')', k);
      if (close != std::string_view::npos && close - k <= 12) consumed = close + 1;
    }
    while (consumed < text.size() && (text[consumed] == ':' || text[consumed] == '.' || text[consumed] == ' '))
      ++consumed;
    return Match{field, consumed};
  }
  return std::nullopt;
}

std::vector<LabelLink> link_label_value(const LayoutGraph& graph, std::vector<Block>& blocks,
                                        std::span<const Token> tokens, const Lexicon& lexicon) {
  std::map<int, const Token*> by_id;
  for (const auto& t : tokens) by_id[t.id] = &t;
  std::map<int, Block*> block_by_id;
  for (auto& b : blocks) block_by_id[b.id] = &b;

  // Tokens of `line` whose text lies at or after byte `offset` of line.text.
  auto tokens_from = [&](const Line& line, std::size_t offset) {
    std::vector<int> ids;
    std::size_t pos = 0;
    for (int id : line.token_ids) {
      const Token* t = by_id.at(id);
      if (pos + t->text.size() > offset) ids.push_back(id);
      pos += t->text.size() + 1;
    }
    return ids;
  };
  auto is_label_only = [&](const Line& line) {
    auto m = lexicon.match_prefix(line.text);
    return m && trim(std::string_view(line.text).substr(m->consumed)).empty();
  };

  std::map<CanonicalField, LabelLink> best;
  auto offer = [&](LabelLink link) {
    if (trim(link.value).empty()) return;
    auto it = best.find(link.field);
    if (it == best.end() || link.distance < it->second.distance) best[link.field] = std::move(link);
  };

  for (auto& block : blocks) {
    int labels = 0, mixed = 0, values = 0;
    for (std::size_t li = 0; li < block.lines.size(); ++li) {
      const Line& line = block.lines[li];
      auto m = lexicon.match_prefix(line.text);
      if (!m) {
        if (is_numeric_text(line.text)) ++values;
        continue;
      }
      std::string rest = trim(std::string_view(line.text).substr(m->consumed));
      int page = by_id.at(line.token_ids.front())->page;
      if (!rest.empty()) {
        ++mixed;
        // "Label: value" inside one line.
        offer({m->field, rest, block.id, block.id, 0.0, tokens_from(line, m->consumed), page});
        continue;
      }
      ++labels;
      // Overlapping line of the right neighbor.
      if (auto e = graph.neighbor(block.id, Relation::right_of)) {
        const Block* nb = block_by_id.at(e->dst);
        for (const auto& nl : nb->lines) {
          if (vertical_overlap_ratio(nl.bbox, line.bbox) >= 0.5 && !is_label_only(nl)) {
            offer({m->field, nl.text, block.id, nb->id, nl.bbox.x0 - line.bbox.x1, nl.token_ids, page});
            break;
          }
        }
        if (best.count(m->field) && best[m->field].label_block == block.id) continue;
      }
      // Stanza: a leading label line followed by value lines in the block.
      if (li == 0 && block.lines.size() > 1) {
        std::string value;
        std::vector<int> ids;
        bool whole = is_address_field(m->field);
        for (std::size_t k = 1; k < block.lines.size(); ++k) {
          if (lexicon.match_prefix(block.lines[k].text)) break;
          if (!whole && k > 1) break;
          if (!value.empty()) value += '\n';
          value += block.lines[k].text;
          ids.insert(ids.end(), block.lines[k].token_ids.begin(), block.lines[k].token_ids.end());
        }
        if (!value.empty()) {
          offer({m->field, value, block.id, block.id, block.lines[1].bbox.y0 - line.bbox.y1, ids, page});
          continue;
        }
      }
      // First line of the block below, for a label that ends its block.
      if (li + 1 == block.lines.size()) {
        if (auto e = graph.neighbor(block.id, Relation::below)) {
          const Block* nb = block_by_id.at(e->dst);
          const Line& nl = nb->lines.front();
          if (!is_label_only(nl))
            offer({m->field, nl.text, block.id, nb->id, e->gap_px, nl.token_ids, page});
        }
      }
    }
    if (mixed > 0 || (labels > 0 && values > 0))
      block.role = BlockRole::mixed;
    else if (labels > 0)
      block.role = BlockRole::label;
    else if (values > 0)
      block.role = BlockRole::value;
    else
      block.role = BlockRole::unknown;
  }
  // Lines of `b` after line `from` up to the next label line.
  auto continuation = [&](const Block& b, std::size_t from, std::string& value, std::vector<int>& ids) {
    for (std::size_t k = from; k < b.lines.size(); ++k) {
      if (lexicon.match_prefix(b.lines[k].text)) break;
      if (!value.empty()) value += '\n';
      value += b.lines[k].text;
      ids.insert(ids.end(), b.lines[k].token_ids.begin(), b.lines[k].token_ids.end());
    }
  };
  auto line_index = [](const Block& b, int token_id) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < b.lines.size(); ++k)
      if (std::find(b.lines[k].token_ids.begin(), b.lines[k].token_ids.end(), token_id) != b.lines[k].token_ids.end())
        return k;
    return std::nullopt;
  };

  // Letterhead: an unlabeled first header block names the vendor.
  if (!best.count(CanonicalField::vendor_name)) {
    std::vector<const Block*> header;
    for (const auto& b : blocks)
      if (b.region == Region::header && !b.lines.empty()) header.push_back(&b);
    std::sort(header.begin(), header.end(), [](const Block* a, const Block* b) {
      return a->bbox.y0 != b->bbox.y0 ? a->bbox.y0 < b->bbox.y0 : a->bbox.x0 < b->bbox.x0;
    });
    for (const Block* b : header) {
      const Line& first = b->lines.front();
      std::string norm = normalize_label(first.text);
      if (lexicon.match_prefix(first.text) || is_numeric_text(first.text) || norm == "invoice" ||
          norm == "tax invoice")
        continue;
      int page = by_id.at(first.token_ids.front())->page;
      constexpr double kUnlabeled = 1e9;
      offer({CanonicalField::vendor_name, first.text, b->id, b->id, kUnlabeled, first.token_ids, page});
      break;
    }
  }
  // The lines following the vendor name in its block are the vendor address.
  if (auto it = best.find(CanonicalField::vendor_name); it != best.end() && !best.count(CanonicalField::vendor_address)) {
    const LabelLink& name = it->second;
    const Block* b = block_by_id.at(name.value_block);
    if (!name.token_ids.empty())
      if (auto k = line_index(*b, name.token_ids.front())) {
        std::string value;
        std::vector<int> ids;
        continuation(*b, *k + 1, value, ids);
        if (!value.empty())
          offer({CanonicalField::vendor_address, value, name.label_block, b->id, name.distance, ids, name.page});
      }
  }

  std::vector<LabelLink> out;
  for (auto& [field, link] : best) out.push_back(std::move(link));
  return out;
}

PageLayout analyze_page(std::span<const Token> tokens, double page_height, const Lexicon& lexicon,
                        const LayoutParams& p) {
  PageLayout out;
  out.lines = cluster_lines(tokens, p);
  out.blocks = cluster_blocks(out.lines, p);
  out.tables = detect_tables(tokens, p);
  classify_regions(out.blocks, page_height, out.tables, p);
  out.graph = build_graph(out.blocks, p);
  out.links = link_label_value(out.graph, out.blocks, tokens, lexicon);
  return out;
}

}  // namespace invx
