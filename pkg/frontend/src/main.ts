/** Browser bootstrap: global KaTeX (script tag), session storage, same-origin API. */

import { ReviewApi } from './api.js';
import { TexRenderer } from './math_render.js';
import { mountApp } from './app.js';

declare const katex: TexRenderer;

const params = new URLSearchParams(window.location.search);
const reviewer = params.get('reviewer') ?? 'anonymous';

mountApp(document.getElementById('app')!, {
  api: new ReviewApi(''),
  reviewer,
  katex,
  storage: window.sessionStorage,
});
