/** Parsing of engine log records (`name key=value key=value ...`). */

export interface LogRecord {
  name: string;
  fields: Record<string, string>;
}

export function parseRecord(line: string): LogRecord {
  const parts = line.trim().split(" ");
  const fields: Record<string, string> = {};
  for (const part of parts.slice(1)) {
    const eq = part.indexOf("=");
    if (eq > 0) {
      fields[part.slice(0, eq)] = part.slice(eq + 1);
    }
  }
  return { name: parts[0] ?? "", fields };
}

/** Decode a quoted free-text field (engine quotes with percent-encoding). */
export function unquote(value: string): string {
  try {
    return decodeURIComponent(value);
  } catch {
    return value;
  }
}

export function numField(rec: LogRecord, key: string): number | null {
  const raw = rec.fields[key];
  if (raw === undefined || raw === "na") return null;
  const v = Number(raw);
  return Number.isFinite(v) ? v : null;
}
