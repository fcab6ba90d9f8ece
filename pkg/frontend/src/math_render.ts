/**
 * Pure text-to-HTML rendering with inline and display math segments.
 *
 * `$$...$$` renders in display mode, `$...$` inline, `\$` is a literal
 * dollar, and anything unmatched stays literal text. Rendering is a pure
 * function of the input string, so a panel bound to an editor updates
 * deterministically from its content.
 */

export interface TexRenderer {
  renderToString(
    tex: string,
    options?: { throwOnError?: boolean; displayMode?: boolean },
  ): string;
}

export interface Segment {
  kind: 'text' | 'inline' | 'display';
  content: string;
}

const SEGMENT_RE = /\\\$|\$\$([\s\S]+?)\$\$|\$([^$\n]+?)\$/g;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

export function splitMathSegments(text: string): Segment[] {
  const segments: Segment[] = [];
  let cursor = 0;
  const pushText = (content: string) => {
    if (!content) return;
    const last = segments[segments.length - 1];
    if (last && last.kind === 'text') {
      last.content += content;
    } else {
      segments.push({ kind: 'text', content });
    }
  };
  SEGMENT_RE.lastIndex = 0;
  for (let match = SEGMENT_RE.exec(text); match; match = SEGMENT_RE.exec(text)) {
    pushText(text.slice(cursor, match.index));
    if (match[0] === '\\$') {
      pushText('$');
    } else if (match[1] !== undefined) {
      segments.push({ kind: 'display', content: match[1] });
    } else {
      segments.push({ kind: 'inline', content: match[2] ?? '' });
    }
    cursor = match.index + match[0].length;
  }
  pushText(text.slice(cursor));
  return segments;
}

export function renderMathHtml(text: string, katex: TexRenderer): string {
  return splitMathSegments(text)
    .map((segment) => {
      if (segment.kind === 'text') {
        return escapeHtml(segment.content);
      }
      return katex.renderToString(segment.content, {
        throwOnError: false,
        displayMode: segment.kind === 'display',
      });
    })
    .join('');
}
