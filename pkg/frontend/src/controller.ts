/** Application orchestration, renderer-agnostic so the full loop can
 * run headless in tests: every displayed number comes from a server
 * response, never from client arithmetic. */

import { ApiError, Client } from "./api.js";
import { GridState, moveItem } from "./state.js";
import type {
  Address,
  AuditEntry,
  RuleInfo,
  TraceNode,
  TraceResponse,
} from "./types.js";

export interface TracePanel {
  stack: TraceResponse[];
}

export class App {
  state!: GridState;
  rules: RuleInfo[] = [];
  /** Working copy edited by the rule panel until "apply". */
  ruleDraft: { order: string[]; enabled: Record<string, boolean> } | null = null;
  trace: TracePanel = { stack: [] };
  auditFlags = new Set<string>();
  lastError: string | null = null;
  busy = false;

  constructor(
    public client: Client,
    public modelId: string,
    private onChange: () => void = () => {},
  ) {}

  private notify(): void {
    this.onChange();
  }

  /** Repaint without refetching (e.g. after staging an edit). */
  repaint(): void {
    this.notify();
  }

  async init(): Promise<void> {
    const structure = await this.client.getStructure(this.modelId);
    this.state = new GridState(structure);
    await Promise.all([this.refreshRules(), this.refreshAudit()]);
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const grid = await this.client.postView(this.modelId, this.state.buildViewSpec());
    this.state.applyGrid(grid);
    this.notify();
  }

  async refreshRules(): Promise<void> {
    const response = await this.client.getRules(this.modelId);
    this.rules = response.rules;
    this.ruleDraft = null;
    this.notify();
  }

  async refreshAudit(): Promise<void> {
    const audit = await this.client.getAudit(this.modelId);
    this.auditFlags = new Set(
      audit.disagreements.map((e: AuditEntry) => JSON.stringify(sortedAddress(e.address))),
    );
    this.notify();
  }

  isAuditFlagged(address: Address): boolean {
    return this.auditFlags.has(JSON.stringify(sortedAddress(address)));
  }

  /** Send pending edits with the last seen version; a concurrent
   * change surfaces as a conflict instead of silently overwriting. */
  async sendEdits(): Promise<boolean> {
    const writes = this.state.writes();
    if (!writes.length) return true;
    try {
      const report = await this.client.putCells(
        this.modelId,
        writes,
        this.state.lastVersion,
      );
      this.state.discardEdits();
      this.state.lastVersion = report.model_version;
      await this.refresh();
      await this.refreshAudit();
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        this.state.markConflict(error.message);
        this.notify();
        return false;
      }
      throw error;
    }
  }

  /** Reload after a conflict, keeping the user's unsent edits staged. */
  async reloadAfterConflict(): Promise<void> {
    await this.refresh();
  }

  // -- rule panel --

  draftOrder(): string[] {
    return this.ruleDraft?.order ?? this.rules.map((r) => r.name);
  }

  dragRule(from: number, to: number): void {
    const order = moveItem(this.draftOrder(), from, to);
    this.ruleDraft = { order, enabled: this.ruleDraft?.enabled ?? {} };
    this.notify();
  }

  toggleRule(name: string): void {
    const enabled = { ...(this.ruleDraft?.enabled ?? {}) };
    const current =
      enabled[name] ?? this.rules.find((r) => r.name === name)?.enabled ?? true;
    enabled[name] = !current;
    this.ruleDraft = { order: this.draftOrder(), enabled };
    this.notify();
  }

  async applyRuleChanges(): Promise<void> {
    if (!this.ruleDraft) return;
    const response = await this.client.patchRules(this.modelId, {
      reorder: this.ruleDraft.order,
      set_enabled: this.ruleDraft.enabled,
      model_version: this.state.lastVersion,
    });
    this.rules = response.rules;
    this.ruleDraft = null;
    this.state.lastVersion = response.model_version;
    await this.refresh();
    await this.refreshAudit();
  }

  // -- trace panel --

  async openTrace(address: Address, rule?: string): Promise<TraceResponse> {
    const response = await this.client.postTrace(this.modelId, address, rule);
    this.trace.stack = [response];
    this.notify();
    return response;
  }

  async drillChild(child: TraceNode, rule?: string): Promise<TraceResponse> {
    const response = await this.client.postTrace(
      this.modelId,
      child.address,
      rule,
      child.label,
    );
    this.trace.stack = [...this.trace.stack, response];
    this.notify();
    return response;
  }

  closeTrace(): void {
    this.trace.stack = [];
    this.notify();
  }

  /** Poll hook: refresh when someone else bumped the model version
   * (never while local edits are staged). */
  async pollVersion(): Promise<void> {
    const stats = await this.client.getStats(this.modelId);
    if (stats.model_version !== this.state.lastVersion && !this.state.pendingEdits.size) {
      await this.refresh();
      await this.refreshRules();
    }
  }
}

function sortedAddress(address: Address): [string, string][] {
  return Object.keys(address)
    .sort()
    .map((k) => [k, address[k]]);
}
