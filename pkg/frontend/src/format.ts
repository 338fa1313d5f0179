/** Client-side number rendering. Raw values are never altered; the
 * format hint comes from the model's per-member display metadata. */

export function formatValue(
  value: number,
  error: string | null,
  hint: string | null,
): string {
  if (error) {
    return error === "DIV0" ? "#DIV/0!" : `#${error}!`;
  }
  if (hint === "percent") {
    return (value * 100).toFixed(1) + "%";
  }
  if (hint === "currency") {
    return value.toLocaleString("en-US", {
      minimumFractionDigits: 2,
      maximumFractionDigits: 2,
    });
  }
  if (Number.isInteger(value)) {
    return value.toLocaleString("en-US");
  }
  return value.toLocaleString("en-US", {
    minimumFractionDigits: 2,
    maximumFractionDigits: 2,
  });
}

/** The strongest format hint among the members addressing a cell. */
export function cellHint(hints: (string | null)[]): string | null {
  if (hints.includes("percent")) {
    return "percent";
  }
  if (hints.includes("currency")) {
    return "currency";
  }
  return hints.find((h) => h !== null) ?? null;
}
