import { describe, expect, it } from "vitest";

import { resolveTriageCommand } from "../src/keyboard.js";

describe("resolveTriageCommand", () => {
  it("binds accept, reject, and skip", () => {
    expect(resolveTriageCommand("a")).toBe("accept");
    expect(resolveTriageCommand("r")).toBe("reject");
    expect(resolveTriageCommand("s")).toBe("skip");
  });

  it("supports vim-style navigation", () => {
    expect(resolveTriageCommand("j")).toBe("skip");
    expect(resolveTriageCommand("k")).toBe("previous");
  });

  it("is case-insensitive for letters", () => {
    expect(resolveTriageCommand("A")).toBe("accept");
  });

  it("ignores unbound keys", () => {
    expect(resolveTriageCommand("x")).toBeUndefined();
    expect(resolveTriageCommand("Enter")).toBeUndefined();
  });
});
