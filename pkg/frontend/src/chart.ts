/** Dependency-free SVG line chart for sensitivity curves. */

export interface Series {
  label: string;
  rows: [number, number][];
  color: string;
}

const SERIES_COLORS = ["#e4572e", "#17bebb", "#ffc914", "#76b041", "#a05195"];

export function seriesColor(index: number): string {
  return SERIES_COLORS[index % SERIES_COLORS.length];
}

/** Render series into an SVG string; x is normalized range position. */
export function renderChart(series: Series[], width = 420,
                            height = 220): string {
  const margin = { left: 52, right: 10, top: 12, bottom: 30 };
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;
  const visible = series.filter((s) => s.rows.length > 0);
  const yMax = Math.max(1e-12,
                        ...visible.flatMap((s) => s.rows.map((r) => r[1])));

  const xPix = (t: number) => margin.left + t * innerW;
  const yPix = (v: number) => margin.top + innerH * (1 - v / yMax);

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
             `height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect x="${margin.left}" y="${margin.top}" width="${innerW}" ` +
             `height="${innerH}" fill="none" stroke="#445"/>`);
  for (const frac of [0, 0.5, 1]) {
    const y = yPix(frac * yMax);
    parts.push(`<text x="${margin.left - 6}" y="${y + 4}" ` +
               `text-anchor="end" font-size="10" fill="#aab">` +
               `${(frac * yMax).toPrecision(3)}</text>`);
    const x = xPix(frac);
    parts.push(`<text x="${x}" y="${height - 8}" text-anchor="middle" ` +
               `font-size="10" fill="#aab">${frac}</text>`);
  }
  parts.push(`<text x="${width / 2}" y="${height - 18}" text-anchor="middle" ` +
             `font-size="11" fill="#ccd">position in parameter range</text>`);

  for (const s of visible) {
    const n = s.rows.length;
    const path = s.rows
      .map((row, i) => {
        const t = n === 1 ? 0.5 : i / (n - 1);
        return `${i === 0 ? "M" : "L"}${xPix(t).toFixed(1)},` +
               `${yPix(row[1]).toFixed(1)}`;
      })
      .join(" ");
    parts.push(`<path d="${path}" fill="none" stroke="${s.color}" ` +
               `stroke-width="2"/>`);
    for (const [i, row] of s.rows.entries()) {
      const t = n === 1 ? 0.5 : i / (n - 1);
      parts.push(`<circle cx="${xPix(t).toFixed(1)}" ` +
                 `cy="${yPix(row[1]).toFixed(1)}" r="2.6" fill="${s.color}"/>`);
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

/** Count of plotted points per series label (used by tests and captions). */
export function pointCounts(series: Series[]): Record<string, number> {
  return Object.fromEntries(series.map((s) => [s.label, s.rows.length]));
}
