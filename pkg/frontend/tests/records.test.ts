import { describe, expect, it } from "vitest";

import { numField, parseRecord, unquote } from "../src/records.js";

describe("record parsing", () => {
  it("splits name and key=value fields", () => {
    const rec = parseRecord("event ts=12.500000 kind=nudge place=lm2 rationale=scheduled");
    expect(rec.name).toBe("event");
    expect(rec.fields.ts).toBe("12.500000");
    expect(rec.fields.kind).toBe("nudge");
    expect(rec.fields.place).toBe("lm2");
  });

  it("keeps '=' inside values intact", () => {
    const rec = parseRecord("command action=%7B%22a%22%3A%22x%3Dy%22%7D result=applied");
    expect(unquote(rec.fields.action)).toBe('{"a":"x=y"}');
  });

  it("decodes percent-quoted text", () => {
    expect(unquote("what%20day%20is%20it%3F")).toBe("what day is it?");
  });

  it("numField returns null for na and garbage", () => {
    const rec = parseRecord("metrics ts=1.000000 sigma=na q=abc");
    expect(numField(rec, "ts")).toBe(1.0);
    expect(numField(rec, "sigma")).toBeNull();
    expect(numField(rec, "q")).toBeNull();
    expect(numField(rec, "missing")).toBeNull();
  });
});
