/** Client-side view state: dimension shelves, expand/collapse, pending
 * edits and optimistic-concurrency bookkeeping.
 *
 * The client never computes cell values; this module only assembles
 * view specifications, tracks what the user touched, and diffs
 * successive server grids so changed cells can be highlighted. */

import type {
  Address,
  CellWrite,
  StructureInfo,
  ViewGrid,
  ViewSpecBody,
} from "./types.js";

export type Zone = "pages" | "rows" | "cols";

export interface PendingEdit {
  address: Address;
  value: number;
  override: boolean;
  row: number;
  col: number;
}

function addressKey(address: Address): string {
  return Object.keys(address)
    .sort()
    .map((k) => `${k}=${address[k]}`)
    .join("|");
}

/** Move one element of a list; used by shelf and rule drag-reorder. */
export function moveItem<T>(items: T[], from: number, to: number): T[] {
  const next = items.slice();
  const [moved] = next.splice(from, 1);
  next.splice(to, 0, moved);
  return next;
}

export class GridState {
  structure: StructureInfo;
  rows: string[] = [];
  cols: string[] = [];
  pageMembers = new Map<string, string>();
  /** Expanded parents per dimension; starts fully expanded. */
  expanded = new Map<string, Set<string>>();
  pendingEdits = new Map<string, PendingEdit>();
  grid: ViewGrid | null = null;
  lastVersion: number;
  conflict: string | null = null;
  /** Cells whose value changed in the latest refresh ("row,col"). */
  changed = new Set<string>();

  constructor(structure: StructureInfo) {
    this.structure = structure;
    this.lastVersion = structure.model_version;
    const names = structure.dimensions.map((d) => d.name);
    // Default layout: first dimension on rows, last on columns, the
    // rest as pages pinned to their first member.
    this.rows = [names[0]];
    this.cols = [names[names.length - 1]];
    for (const dim of structure.dimensions) {
      this.expanded.set(
        dim.name,
        new Set(dim.members.filter((m) => m.has_children).map((m) => m.name)),
      );
      if (!this.rows.includes(dim.name) && !this.cols.includes(dim.name)) {
        this.pageMembers.set(dim.name, dim.members[0].name);
      }
    }
  }

  get pages(): string[] {
    return this.structure.dimensions
      .map((d) => d.name)
      .filter((n) => !this.rows.includes(n) && !this.cols.includes(n));
  }

  zoneOf(dim: string): Zone {
    if (this.rows.includes(dim)) return "rows";
    if (this.cols.includes(dim)) return "cols";
    return "pages";
  }

  /** Move a dimension between shelves (drag-and-drop target). */
  placeDimension(dim: string, zone: Zone, index = Infinity): void {
    this.rows = this.rows.filter((d) => d !== dim);
    this.cols = this.cols.filter((d) => d !== dim);
    if (zone === "rows" || zone === "cols") {
      const shelf = zone === "rows" ? this.rows : this.cols;
      shelf.splice(Math.min(index, shelf.length), 0, dim);
    } else if (!this.pageMembers.has(dim)) {
      const info = this.structure.dimensions.find((d) => d.name === dim);
      this.pageMembers.set(dim, info ? info.members[0].name : "");
    }
    this.pendingEdits.clear();
  }

  setPage(dim: string, member: string): void {
    this.pageMembers.set(dim, member);
    this.pendingEdits.clear();
  }

  toggleExpand(dim: string, member: string): boolean {
    const set = this.expanded.get(dim);
    if (!set) return false;
    if (set.has(member)) {
      set.delete(member);
    } else {
      set.add(member);
    }
    return set.has(member);
  }

  buildViewSpec(): ViewSpecBody {
    const pages: Record<string, string> = {};
    for (const dim of this.pages) {
      pages[dim] = this.pageMembers.get(dim) ?? "";
    }
    const expand: Record<string, string[]> = {};
    for (const dim of [...this.rows, ...this.cols]) {
      expand[dim] = [...(this.expanded.get(dim) ?? [])];
    }
    return {
      pages,
      rows: this.rows,
      cols: this.cols,
      expand,
      member_selection: {},
    };
  }

  addressAt(row: number, col: number): Address {
    if (!this.grid) throw new Error("no grid loaded");
    const address: Address = {};
    for (const [dim, member] of this.grid.pages) {
      address[dim] = member;
    }
    this.grid.row_dims.forEach((dim, i) => {
      address[dim] = this.grid!.row_headers[row][i];
    });
    this.grid.col_dims.forEach((dim, i) => {
      address[dim] = this.grid!.col_headers[col][i];
    });
    return address;
  }

  isEditable(row: number, col: number): boolean {
    return this.grid?.flags[row][col].includes("input-eligible") ?? false;
  }

  isOverridden(row: number, col: number): boolean {
    return this.grid?.flags[row][col].includes("overridden") ?? false;
  }

  /** Stage an edit. Rule-covered cells are rejected unless the user
   * explicitly marks the edit as an override. */
  stageEdit(row: number, col: number, value: number, override = false): boolean {
    if (!this.grid) return false;
    if (!this.isEditable(row, col) && !override) {
      return false;
    }
    const address = this.addressAt(row, col);
    this.pendingEdits.set(addressKey(address), {
      address,
      value,
      override: override || !this.isEditable(row, col),
      row,
      col,
    });
    return true;
  }

  discardEdits(): void {
    this.pendingEdits.clear();
  }

  /** Pending edits as wire writes. */
  writes(): CellWrite[] {
    return [...this.pendingEdits.values()].map((e) => ({
      address: e.address,
      value: e.value,
      mode: e.override ? "override" : "data",
    }));
  }

  /** Install a fresh server grid, remembering which cells changed. */
  applyGrid(grid: ViewGrid): void {
    this.changed.clear();
    const previous = this.grid;
    if (
      previous &&
      previous.row_headers.length === grid.row_headers.length &&
      previous.col_headers.length === grid.col_headers.length
    ) {
      for (let i = 0; i < grid.values.length; i++) {
        for (let j = 0; j < grid.values[i].length; j++) {
          if (
            previous.values[i][j] !== grid.values[i][j] ||
            previous.errors[i][j] !== grid.errors[i][j]
          ) {
            this.changed.add(`${i},${j}`);
          }
        }
      }
    }
    this.grid = grid;
    this.lastVersion = grid.model_version;
    this.conflict = null;
  }

  markConflict(message: string): void {
    this.conflict = message;
  }

  formatHints(row: number, col: number): (string | null)[] {
    if (!this.grid) return [];
    const address = this.addressAt(row, col);
    const hints: (string | null)[] = [];
    for (const dim of this.structure.dimensions) {
      const member = dim.members.find((m) => m.name === address[dim.name]);
      hints.push(member?.format ?? null);
    }
    return hints;
  }
}
