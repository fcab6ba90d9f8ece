/**
 * DOM layer: declarative rendering of the session state plus event wiring.
 *
 * The candidate panel renders the editor content live, so what the reviewer
 * sees is always the math rendering of what will be saved on edit. Keyboard
 * shortcuts: a = accept, e = edit, r = reject (outside the editor).
 */

import { ReviewApi } from './api.js';
import { renderMathHtml, TexRenderer, escapeHtml } from './math_render.js';
import { BufferStorage, ReviewSession, ViewState } from './view_model.js';

export interface AppOptions {
  api: ReviewApi;
  reviewer: string;
  katex: TexRenderer;
  storage?: BufferStorage;
}

const IMAGE_RE = /\.(png|jpe?g|gif|webp|svg)$/i;

export function mountApp(root: HTMLElement, options: AppOptions): ReviewSession {
  const session = new ReviewSession(options.api, options.reviewer, options.storage);
  root.innerHTML = `
    <header class="topbar">
      <h1>Benchmark review</h1>
      <div id="counters" class="counters"></div>
    </header>
    <main class="panels">
      <section class="panel">
        <h2>Source</h2>
        <div id="source-panel" class="content"></div>
      </section>
      <section class="panel">
        <h2>Candidate (rendered)</h2>
        <div id="candidate-panel" class="content"></div>
      </section>
      <section class="panel">
        <h2>Editor</h2>
        <textarea id="editor" spellcheck="false"></textarea>
        <input id="note" type="text" placeholder="reviewer note (optional)" />
      </section>
    </main>
    <footer class="actions">
      <button id="accept" data-shortcut="a">Accept (a)</button>
      <button id="edit" data-shortcut="e">Save edit (e)</button>
      <button id="reject" data-shortcut="r">Reject (r)</button>
      <span id="message" class="message"></span>
    </footer>
  `;

  const el = {
    counters: root.querySelector<HTMLElement>('#counters')!,
    source: root.querySelector<HTMLElement>('#source-panel')!,
    candidate: root.querySelector<HTMLElement>('#candidate-panel')!,
    editor: root.querySelector<HTMLTextAreaElement>('#editor')!,
    note: root.querySelector<HTMLInputElement>('#note')!,
    accept: root.querySelector<HTMLButtonElement>('#accept')!,
    edit: root.querySelector<HTMLButtonElement>('#edit')!,
    reject: root.querySelector<HTMLButtonElement>('#reject')!,
    message: root.querySelector<HTMLElement>('#message')!,
  };

  function renderSource(state: ViewState): void {
    const item = state.item;
    if (!item) {
      el.source.innerHTML = '';
      return;
    }
    if (IMAGE_RE.test(item.source_ref)) {
      el.source.innerHTML = `<img src="${escapeHtml(item.source_ref)}" alt="source document" />`;
    } else {
      el.source.innerHTML = renderMathHtml(item.source_ref, options.katex);
    }
  }

  function render(state: ViewState): void {
    el.counters.textContent = state.counters
      ? `pending ${state.counters.pending} · accepted ${state.counters.accepted} · ` +
        `edited ${state.counters.edited} · rejected ${state.counters.rejected}`
      : '';
    renderSource(state);
    el.candidate.innerHTML =
      state.phase === 'done'
        ? '<p class="done">All items reviewed.</p>'
        : renderMathHtml(state.editorText, options.katex);
    if (el.editor.value !== state.editorText) {
      el.editor.value = state.editorText;
    }
    el.editor.disabled = state.phase !== 'reviewing';
    el.note.disabled = state.phase !== 'reviewing';
    el.accept.disabled = !session.canSubmit('accept');
    el.edit.disabled = !session.canSubmit('edit');
    el.reject.disabled = !session.canSubmit('reject');
    el.message.textContent =
      state.phase === 'error' || state.message
        ? (state.message ?? 'something went wrong')
        : '';
  }

  session.subscribe(render);

  el.editor.addEventListener('input', () => session.setEditorText(el.editor.value));
  el.note.addEventListener('input', () => session.setNote(el.note.value));
  const submit = (decision: 'accept' | 'edit' | 'reject') => {
    if (session.canSubmit(decision)) {
      void session.submit(decision);
    }
  };
  el.accept.addEventListener('click', () => submit('accept'));
  el.edit.addEventListener('click', () => submit('edit'));
  el.reject.addEventListener('click', () => submit('reject'));
  root.ownerDocument.addEventListener('keydown', (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === 'TEXTAREA' || target.tagName === 'INPUT')) {
      return;
    }
    if (event.key === 'a') submit('accept');
    if (event.key === 'e') submit('edit');
    if (event.key === 'r') submit('reject');
  });

  render(session.getState());
  void session.loadNext();
  return session;
}
