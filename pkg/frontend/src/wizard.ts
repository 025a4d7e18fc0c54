// Two-page survey wizard. All authoritative state lives in the service;
// the UI only tracks which page it is showing and when the page appeared.

import {
  ApiError,
  PageOneAnswers,
  PageOneView,
  PageTwoView,
  Question,
  SurveyApi,
} from "./api.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface WizardOptions {
  root: HTMLElement;
  api: SurveyApi;
  token: string;
  storage?: StorageLike;
  now?: () => number;
}

export class SurveyWizard {
  private root: HTMLElement;
  private api: SurveyApi;
  private token: string;
  private storage: StorageLike;
  private now: () => number;

  constructor(opts: WizardOptions) {
    this.root = opts.root;
    this.api = opts.api;
    this.token = opts.token;
    this.storage = opts.storage ?? new MemoryStorage();
    this.now = opts.now ?? (() => Date.now());
  }

  async start(): Promise<void> {
    let state;
    try {
      state = await this.api.state(this.token);
    } catch (err) {
      this.renderError(err instanceof ApiError && err.status === 404
        ? "This survey link is not valid. Please check the URL you were given."
        : `Could not reach the survey service: ${String(err)}`);
      return;
    }
    if (state.completed) {
      this.renderComplete(state.completion_code ?? "");
      return;
    }
    await this.showItem(state.next_item ?? 1, state.next_page ?? 1);
  }

  async showItem(item: number, page: number): Promise<void> {
    try {
      if (page === 1) {
        this.renderPageOne(await this.api.pageOne(this.token, item));
      } else {
        this.renderPageTwo(await this.api.pageTwo(this.token, item));
      }
    } catch (err) {
      this.renderError(String(err));
    }
  }

  // The page timer starts when a page is first shown and survives reloads:
  // the original start timestamp is kept in storage until the page is
  // submitted, so time spent before a reload still counts.
  private timerKey(item: number, page: number): string {
    return `survey:${this.token}:item${item}:page${page}:start`;
  }

  startTimer(item: number, page: number): void {
    const key = this.timerKey(item, page);
    if (this.storage.getItem(key) === null) {
      this.storage.setItem(key, String(this.now()));
    }
  }

  elapsedSeconds(item: number, page: number): number {
    const raw = this.storage.getItem(this.timerKey(item, page));
    const start = raw === null ? this.now() : Number(raw);
    return Math.max(0, (this.now() - start) / 1000);
  }

  private clearTimer(item: number, page: number): void {
    this.storage.removeItem(this.timerKey(item, page));
  }

  private clear(): void {
    this.root.textContent = "";
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    cls?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.root.ownerDocument.createElement(tag);
    if (cls) node.className = cls;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private header(item: number, total: number, page: number): HTMLElement {
    const head = this.el("div", "progress");
    head.textContent = `Method ${item} of ${total} — page ${page} of 2`;
    return head;
  }

  private codeBlock(code: string): HTMLElement {
    const wrap = this.el("div", "code-wrap");
    const pre = this.el("pre", "code");
    pre.textContent = code;
    wrap.appendChild(pre);
    return wrap;
  }

  private radioGroup(question: Question, name: string, disabled: boolean): HTMLElement {
    const block = this.el("fieldset", "question");
    block.appendChild(this.el("legend", "question-text", question.text));
    for (const option of question.options) {
      const label = this.el("label", "option");
      const input = this.el("input");
      input.type = "radio";
      input.name = name;
      input.value = String(option.value);
      input.disabled = disabled;
      label.appendChild(input);
      label.appendChild(this.el("span", "option-label", option.label));
      block.appendChild(label);
    }
    return block;
  }

  private selectedValue(name: string): string | null {
    const checked = this.root.querySelector<HTMLInputElement>(`input[name="${name}"]:checked`);
    return checked ? checked.value : null;
  }

  private showMessage(text: string): void {
    const box = this.root.querySelector<HTMLElement>(".message");
    if (box) {
      box.textContent = text;
      box.classList.toggle("hidden", text === "");
    }
  }

  renderPageOne(view: PageOneView): void {
    this.clear();
    this.startTimer(view.item, 1);
    this.root.appendChild(this.header(view.item, view.item_count, 1));
    this.root.appendChild(this.codeBlock(view.code));
    const summaryBox = this.el("div", "summary-box");
    summaryBox.appendChild(this.el("div", "summary-title", "Summary"));
    summaryBox.appendChild(this.el("div", "summary-text", view.summary));
    this.root.appendChild(summaryBox);

    const form = this.el("form", "page-one");
    for (const question of view.questions) {
      form.appendChild(this.radioGroup(question, `q-${question.id}`, view.answered));
    }
    form.appendChild(this.el("div", "message hidden"));
    const button = this.el("button", "submit", view.answered ? "Continue" : "Next");
    button.type = "submit";
    form.appendChild(button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (view.answered) {
        void this.showItem(view.item, 2);
        return;
      }
      void this.submitPageOne(view);
    });
    this.root.appendChild(form);
    if (view.answered) {
      this.showMessage("This page was already answered; it is shown read-only.");
    }
  }

  private async submitPageOne(view: PageOneView): Promise<void> {
    const values: Partial<PageOneAnswers> = {};
    for (const question of view.questions) {
      const picked = this.selectedValue(`q-${question.id}`);
      if (picked === null) {
        this.showMessage("Please answer all three questions before continuing.");
        return;
      }
      values[question.id as keyof PageOneAnswers] = Number(picked);
    }
    try {
      await this.api.submitPageOne(
        this.token,
        view.item,
        values as PageOneAnswers,
        this.elapsedSeconds(view.item, 1),
      );
    } catch (err) {
      // keep the selections in place for retry
      this.showMessage(`Could not save your answers: ${String(err)}`);
      return;
    }
    this.clearTimer(view.item, 1);
    await this.showItem(view.item, 2);
  }

  renderPageTwo(view: PageTwoView): void {
    this.clear();
    this.startTimer(view.item, 2);
    this.root.appendChild(this.header(view.item, view.item_count, 2));
    this.root.appendChild(this.codeBlock(view.code));
    for (const [title, text] of [
      ["Summary 1", view.summary_1],
      ["Summary 2", view.summary_2],
    ] as const) {
      const box = this.el("div", "summary-box");
      box.appendChild(this.el("div", "summary-title", title));
      box.appendChild(this.el("div", "summary-text", text));
      this.root.appendChild(box);
    }

    const form = this.el("form", "page-two");
    form.appendChild(this.radioGroup(view.question, "q-preference", view.answered));
    const rationaleLabel = this.el("label", "rationale-label", "Why? A short rationale is required.");
    const rationale = this.el("textarea", "rationale");
    rationale.name = "rationale";
    rationale.rows = 3;
    rationale.disabled = view.answered;
    rationaleLabel.appendChild(rationale);
    form.appendChild(rationaleLabel);
    form.appendChild(this.el("div", "message hidden"));
    const button = this.el("button", "submit", view.answered ? "Continue" : "Submit");
    button.type = "submit";
    form.appendChild(button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (view.answered) {
        void this.advance(view.item);
        return;
      }
      void this.submitPageTwo(view, rationale);
    });
    this.root.appendChild(form);
    if (view.answered) {
      this.showMessage("This page was already answered; it is shown read-only.");
    }
  }

  private async submitPageTwo(view: PageTwoView, rationale: HTMLTextAreaElement): Promise<void> {
    const preference = this.selectedValue("q-preference");
    if (preference === null) {
      this.showMessage("Please choose one of the options.");
      return;
    }
    if (rationale.value.trim() === "") {
      this.showMessage("Please enter a rationale for your answer.");
      return;
    }
    let ack;
    try {
      ack = await this.api.submitPageTwo(
        this.token,
        view.item,
        preference,
        rationale.value,
        this.elapsedSeconds(view.item, 2),
      );
    } catch (err) {
      this.showMessage(`Could not save your answer: ${String(err)}`);
      return;
    }
    this.clearTimer(view.item, 2);
    if (ack.completed) {
      this.renderComplete(ack.completion_code ?? "");
    } else {
      await this.showItem(ack.next_item ?? view.item + 1, ack.next_page ?? 1);
    }
  }

  private async advance(afterItem: number): Promise<void> {
    const state = await this.api.state(this.token);
    if (state.completed) {
      this.renderComplete(state.completion_code ?? "");
    } else {
      await this.showItem(state.next_item ?? afterItem + 1, state.next_page ?? 1);
    }
  }

  renderComplete(code: string): void {
    this.clear();
    const box = this.el("div", "complete");
    box.appendChild(this.el("h2", undefined, "Thank you!"));
    box.appendChild(this.el("p", undefined, "You have rated every method in this session."));
    box.appendChild(this.el("p", "completion-label", "Your completion code:"));
    box.appendChild(this.el("div", "completion-code", code));
    this.root.appendChild(box);
  }

  renderError(message: string): void {
    this.clear();
    const box = this.el("div", "error");
    box.appendChild(this.el("h2", undefined, "Something went wrong"));
    box.appendChild(this.el("p", "error-text", message));
    this.root.appendChild(box);
  }
}

class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}
