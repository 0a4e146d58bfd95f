// Shared-token highlighting. The tokens come from the service (they are the
// overlap that let the pair through the message-matching filter); the UI
// never computes its own.

const HTML_ESCAPES: Readonly<Record<string, string>> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => HTML_ESCAPES[c] ?? c);
}

function escapeRegExp(text: string): string {
  return text.replace(/[.*+?^${}()|[\]\\]/g, "\\$&");
}

/**
 * Escape the text and wrap each whole-identifier occurrence of the given
 * tokens in `<mark>`. Tokens are identifier-shaped (word characters only),
 * so escaping cannot alter them; longer tokens win over their suffixes.
 */
export function highlightTokens(text: string, tokens: string[]): string {
  const escaped = escapeHtml(text);
  if (tokens.length === 0) {
    return escaped;
  }
  const ordered = [...tokens].sort((a, b) => b.length - a.length).map(escapeRegExp);
  const pattern = new RegExp(
    `(?<![A-Za-z0-9_])(${ordered.join("|")})(?![A-Za-z0-9_])`,
    "g",
  );
  return escaped.replace(pattern, "<mark>$1</mark>");
}
