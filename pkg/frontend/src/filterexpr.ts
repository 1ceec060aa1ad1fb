// Mirror of the server's filter grammar: OR within a facet (|), AND across
// facets (;), percent-encoding inside values so separators stay structural.
// Canonical ordering (sorted facets, sorted deduped values) matches the
// server's cache key, so equivalent selections share server-side work.

// same escape set as python's quote(v, safe="")
export function encodeFilterValue(v: string): string {
  return encodeURIComponent(v).replace(
    /[!'()*]/g,
    (c) => "%" + c.charCodeAt(0).toString(16).toUpperCase(),
  );
}

export function buildFilter(selections: Record<string, string[]>): string {
  const parts: string[] = [];
  for (const facet of Object.keys(selections).sort()) {
    const vals = [...new Set(selections[facet])].sort();
    if (!vals.length) continue;
    parts.push(`${encodeFilterValue(facet)}:${vals.map(encodeFilterValue).join("|")}`);
  }
  return parts.join(";");
}
