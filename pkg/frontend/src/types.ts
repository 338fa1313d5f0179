/** Wire types for the calculation service API. */

export type Address = Record<string, string>;

export interface MemberInfo {
  name: string;
  aliases: string[];
  parent: string | null;
  format: string | null;
  has_children: boolean;
  leaf: boolean;
  depth: number;
}

export interface DimensionInfo {
  name: string;
  members: MemberInfo[];
}

export interface StructureInfo {
  id: string;
  name: string;
  model_version: number;
  dimensions: DimensionInfo[];
}

export interface StatsInfo {
  id: string;
  name: string;
  model_version: number;
  total_cells: number;
  input_cells: number;
  calculated_cells: number;
  rules: number;
}

export interface ModelSummary {
  id: string;
  name: string;
  model_version: number;
}

export interface ViewSpecBody {
  pages: Record<string, string>;
  rows: string[];
  cols: string[];
  expand: Record<string, string[]>;
  member_selection: Record<string, string[]>;
}

export type CellFlag = "input-eligible" | "rule-covered" | "overridden" | "error";

export interface ViewGrid {
  model_version: number;
  pages: [string, string][];
  row_dims: string[];
  col_dims: string[];
  row_headers: string[][];
  col_headers: string[][];
  row_depths: number[][];
  values: number[][];
  errors: (string | null)[][];
  flags: CellFlag[][][];
}

export interface CellWrite {
  address: Address;
  value: number | null;
  mode: "data" | "override" | "clear";
}

export interface CalcReport {
  cells_written: Record<string, number>;
  total_written: number;
  overwrites: number;
  skipped_pinned: number;
  duration_ms: number;
  model_version: number;
}

export interface RuleInfo {
  sequence: number;
  name: string;
  dimension: string;
  target: string;
  formula: string;
  enabled: boolean;
  filters: Record<string, string[]>;
  folder: string[];
}

export interface RulesResponse {
  model_version: number;
  rules: RuleInfo[];
}

export interface RulesPatchResponse extends RulesResponse {
  report: CalcReport;
}

export interface TraceNode {
  label: string;
  address: Address;
  value: number;
  error: string | null;
  rule: string | null;
  rule_formula: string | null;
  has_children: boolean;
  children: TraceNode[];
}

export interface ApplicableRule {
  name: string;
  sequence: number;
  formula: string;
  winner: boolean;
}

export interface TraceResponse {
  model_version: number;
  node: TraceNode;
  applicable_rules: ApplicableRule[];
}

export interface AuditReading {
  rule: string;
  sequence: number;
  value: number;
  error: string | null;
  agrees: boolean;
  winner: boolean;
}

export interface AuditEntry {
  address: Address;
  stored: number;
  stored_error: string | null;
  readings: AuditReading[];
}

export interface AuditResponse {
  model_version: number;
  disagreements: AuditEntry[];
}

export interface LoadReport {
  source_id: string;
  rows_total: number;
  rows_loaded: number;
  rows_rejected: number;
  rejected: [number, string][];
  warnings: string[];
  cells_written: number;
  model_version: number;
}
